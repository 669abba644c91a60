mod cache;
mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use simpack_core::bench::{run_experiment_with, synth_corpus, BenchError, Corpus, ExperimentConfig, SynthParams};
use simpack_core::features::{FeatureSet, MatchParams, ScaleSpaceParams};
use simpack_core::similarity::{
    mixed_group, random_group, sift_picked_with, tags_in_order, top_n, with_workers, PhotoGroup,
};
use simpack_core::{archive, BackendSpec, LrParams};

use cache::{write_atomic, FeatureCache};
use error::Failure;

#[derive(Parser)]
#[command(name = "simpack", version, about = "Similarity-aware raw image archiver and CF benchmark")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "SIMPACK_JOBS", value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features into a cache directory of SFT1 files.
    Features {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// PNM files, used when no manifest is given.
        images: Vec<PathBuf>,
        /// Cache directory.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build photo groups and print them as JSON.
    Group {
        #[command(flatten)]
        select: Select,
        /// Write JSON here instead of standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Pack one photo group into a SIMG archive.
    Pack {
        #[command(flatten)]
        select: Select,
        /// Group JSON from `simpack group` (a single group) instead of selecting.
        #[arg(long)]
        group: Option<PathBuf>,
        #[command(flatten)]
        codec: Codec,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Extract a SIMG archive.
    Unpack {
        archive: PathBuf,
        /// Output directory; defaults to the archive name without extension.
        #[arg(short, long, visible_short_alias = 'd')]
        out: Option<PathBuf>,
        /// External backend (`ext:<command>`) for archives packed with one.
        #[arg(long)]
        backend: Option<BackendSpec>,
    },
    /// Run a strategy x compressor sweep and write a CSV report.
    Bench {
        /// `default` or a JSON experiment config.
        #[arg(long, default_value = "default")]
        config: String,
        /// Use this corpus instead of the config's manifest or synthetic corpus.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<usize>,
        #[arg(long)]
        ratio: Option<f32>,
        #[arg(long)]
        min_match: Option<u32>,
        /// Replaces the config's compressors; repeatable.
        #[arg(long)]
        backend: Vec<BackendSpec>,
        /// Seed for the mixed and random draws.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "SIMPACK_CACHE")]
        cache: Option<PathBuf>,
        /// Also write every archive into this directory.
        #[arg(long)]
        archives: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic corpus with its manifest.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        bases: usize,
        #[arg(long, default_value_t = 10)]
        variants: usize,
        #[arg(long, default_value_t = 256)]
        width: u32,
        #[arg(long, default_value_t = 256)]
        height: u32,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum StrategyArg {
    TopN,
    SiftPicked,
    Mixed,
    Random,
}

#[derive(Args)]
struct Select {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "top_n")]
    strategy: StrategyArg,
    /// Restrict top_n and sift_picked to one tag.
    #[arg(long)]
    tag: Option<String>,
    /// Top-N size (also the pool sift_picked draws from), or the size of a
    /// mixed or random group.
    #[arg(long)]
    size: Option<usize>,
    /// Minimum shared features for an edge in the similarity graph.
    #[arg(long, default_value_t = simpack_core::similarity::DEFAULT_THRESHOLD)]
    threshold: usize,
    #[arg(long, default_value_t = MatchParams::default().ratio)]
    ratio: f32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, env = "SIMPACK_CACHE")]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct Codec {
    #[arg(long, default_value = "lzss")]
    backend: BackendSpec,
    #[arg(long)]
    min_match: Option<u32>,
}

impl Codec {
    fn params(&self) -> Result<LrParams, Failure> {
        match self.min_match {
            Some(m) => LrParams::default().with_min_match(m).map_err(Failure::from),
            None => Ok(LrParams::default()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => error::EXIT_USAGE,
            };
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("simpack: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let jobs = cli.jobs.map_or_else(
        || std::thread::available_parallelism().map_or(1, |n| n.get()),
        |j| j as usize,
    );
    match cli.command {
        Command::Features { manifest, images, out } => features(manifest, images, &out, jobs),
        Command::Group { select, out } => {
            let corpus = load_corpus(select.manifest.as_deref())?;
            let groups = select_groups(&corpus, &select, jobs)?;
            let mut json = serde_json::to_string_pretty(&groups).expect("groups serialize");
            json.push('\n');
            emit(out.as_deref(), json.as_bytes())
        }
        Command::Pack {
            select,
            group,
            codec,
            out,
        } => pack(select, group, codec, out, jobs),
        Command::Unpack { archive, out, backend } => unpack(&archive, out, backend),
        Command::Bench {
            config,
            manifest,
            threshold,
            ratio,
            min_match,
            backend,
            seed,
            cache,
            archives,
            out,
        } => {
            let mut cfg = if config == "default" {
                ExperimentConfig::default()
            } else {
                ExperimentConfig::load(Path::new(&config))?
            };
            if let Some(t) = threshold {
                cfg.threshold = t;
            }
            if let Some(r) = ratio {
                cfg.ratio = r;
            }
            if let Some(m) = min_match {
                cfg.lr = cfg.lr.with_min_match(m)?;
            }
            if !backend.is_empty() {
                cfg.compressors = backend;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if manifest.is_some() {
                cfg.manifest = manifest;
            }
            cfg.validate()?;
            for b in &cfg.compressors {
                b.probe()?;
            }
            let corpus = match &cfg.manifest {
                Some(m) => Corpus::load(m)?,
                None => (&synth_corpus(&cfg.corpus)?).into(),
            };
            let cache = FeatureCache::new(cache, cfg.features)?;
            let extract = |id: &str, bytes: &[u8]| -> Result<FeatureSet, BenchError> {
                cache.get(id, bytes).map_err(|e| BenchError::InvalidParams(format!("{e:#}")))
            };
            let report = run_experiment_with(&corpus, &cfg, jobs, archives.as_deref(), &extract)?;
            for f in &report.flags {
                eprintln!(
                    "simpack: note: group {} has a sift_picked cluster of only {} image(s)",
                    f.group, f.size
                );
            }
            write_file(&out, report.to_csv().as_bytes())
        }
        Command::Synth {
            seed,
            bases,
            variants,
            width,
            height,
            out,
        } => {
            let params = SynthParams {
                seed,
                n_bases: bases,
                variants_per_base: variants,
                width,
                height,
                ..SynthParams::default()
            };
            params.validate().map_err(Failure::usage)?;
            let corpus = synth_corpus(&params)?;
            let manifest = corpus.write(&out)?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::data(e).context(format!("cannot read {}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(path, bytes).map_err(|e| Failure::data(e).context(format!("cannot write {}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout().write_all(bytes).map_err(Failure::data),
    }
}

fn load_corpus(manifest: Option<&Path>) -> Result<Corpus, Failure> {
    let m = manifest.ok_or_else(|| Failure::usage("--manifest is required"))?;
    if !m.is_file() {
        return Err(Failure::data(anyhow::anyhow!("manifest {} does not exist", m.display())));
    }
    Ok(Corpus::load(m)?)
}

fn features(manifest: Option<PathBuf>, images: Vec<PathBuf>, out: &Path, jobs: usize) -> Result<(), Failure> {
    let inputs: Vec<(String, Vec<u8>)> = match manifest {
        Some(m) => {
            if !images.is_empty() {
                return Err(Failure::usage("give either --manifest or image files, not both"));
            }
            let corpus = load_corpus(Some(&m))?;
            corpus
                .entries()
                .iter()
                .map(|e| (e.image_id.clone(), corpus.bytes(&e.image_id).unwrap_or_default().to_vec()))
                .collect()
        }
        None => {
            if images.is_empty() {
                return Err(Failure::usage("no images given"));
            }
            images
                .iter()
                .map(|p| {
                    let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    Ok((id, read_input(p)?))
                })
                .collect::<Result<_, Failure>>()?
        }
    };
    let cache = FeatureCache::new(Some(out.to_path_buf()), ScaleSpaceParams::default())?;
    let counts = with_workers(jobs, || {
        inputs
            .par_iter()
            .map(|(id, bytes)| cache.get(id, bytes).map(|s| s.len()))
            .collect::<anyhow::Result<Vec<_>>>()
    })
    .map_err(Failure::data)?
    .map_err(Failure::data)?;
    let mut stdout = String::new();
    for ((id, bytes), n) in inputs.iter().zip(counts) {
        let file = cache.path_for(bytes).expect("cache dir set");
        stdout.push_str(&format!("{id}\t{n}\t{}\n", file.display()));
    }
    emit(None, stdout.as_bytes())
}

fn select_groups(corpus: &Corpus, s: &Select, jobs: usize) -> Result<Vec<PhotoGroup>, Failure> {
    let entries = corpus.entries();
    let tags = match &s.tag {
        Some(t) => {
            if !entries.iter().any(|e| e.tags.contains(t)) {
                return Err(Failure::data(anyhow::anyhow!("no images tagged `{t}`")));
            }
            vec![t.clone()]
        }
        None => tags_in_order(entries),
    };
    let tagged = |tag: &str| entries.iter().filter(|e| e.tags.iter().any(|t| t == tag)).count();
    let top = |tag: &str| top_n(entries, tag, s.size.unwrap_or_else(|| tagged(tag)));
    match s.strategy {
        StrategyArg::TopN => tags
            .iter()
            .map(|t| Ok(top(t)?.with_label(format!("{t}/top_{}", s.size.unwrap_or_else(|| tagged(t))))))
            .collect(),
        StrategyArg::SiftPicked => {
            let params = MatchParams {
                ratio: s.ratio,
                two_sided: true,
            };
            if !(s.ratio > 0.0 && s.ratio <= 1.0) {
                return Err(Failure::usage("--ratio must lie in (0, 1]"));
            }
            let cache = FeatureCache::new(s.cache.clone(), ScaleSpaceParams::default())?;
            let mut out = Vec::new();
            for t in &tags {
                let pool = top(t)?;
                let sets = with_workers(jobs, || {
                    pool.image_ids
                        .par_iter()
                        .map(|id| cache.get(id, corpus.bytes(id).unwrap_or_default()))
                        .collect::<anyhow::Result<Vec<_>>>()
                })
                .map_err(Failure::data)?
                .map_err(Failure::data)?;
                let picked = sift_picked_with(&sets, s.threshold, &params, jobs)?;
                out.push(picked.with_label(format!("{t}/sift_picked")));
            }
            Ok(out)
        }
        StrategyArg::Mixed | StrategyArg::Random => {
            let size = s.size.unwrap_or(10.min(entries.len()));
            let g = match s.strategy {
                StrategyArg::Mixed => mixed_group(entries, size, s.seed)?,
                _ => random_group(entries, size, s.seed)?,
            };
            Ok(vec![g])
        }
    }
}

fn pack(select: Select, group: Option<PathBuf>, codec: Codec, out: Option<PathBuf>, jobs: usize) -> Result<(), Failure> {
    let params = codec.params()?;
    codec.backend.probe()?;
    let out = out.ok_or_else(|| Failure::usage("--out is required"))?;
    let corpus = load_corpus(select.manifest.as_deref())?;
    let photos = match group {
        Some(path) => {
            let text = read_input(&path)?;
            let value: serde_json::Value = serde_json::from_slice(&text)
                .map_err(|e| Failure::data(e).context(format!("parsing {}", path.display())))?;
            let mut groups: Vec<PhotoGroup> = match value {
                serde_json::Value::Array(_) => serde_json::from_value(value),
                _ => serde_json::from_value(value).map(|g| vec![g]),
            }
            .map_err(|e| Failure::data(e).context(format!("parsing {}", path.display())))?;
            if groups.len() != 1 {
                return Err(Failure::data(anyhow::anyhow!(
                    "{} holds {} groups, expected one",
                    path.display(),
                    groups.len()
                )));
            }
            groups.remove(0)
        }
        None => {
            let mut groups = select_groups(&corpus, &select, jobs)?;
            if groups.len() != 1 {
                return Err(Failure::usage(format!(
                    "the selection yields {} groups; pick one with --tag",
                    groups.len()
                )));
            }
            groups.remove(0)
        }
    };
    let mut s_old = 0u64;
    let bytes = archive::pack(
        &photos,
        |id| {
            let b = corpus.bytes(id)?;
            s_old += b.len() as u64;
            Some((corpus.name(id)?.to_string(), b.to_vec()))
        },
        &params,
        &codec.backend,
    )?;
    write_file(&out, &bytes)?;
    let cf = archive::compression_factor(s_old, bytes.len() as u64)?;
    println!("{}\t{}\t{}\t{}\t{cf:.4}", photos.label, photos.len(), s_old, bytes.len());
    Ok(())
}

fn unpack(path: &Path, out: Option<PathBuf>, backend: Option<BackendSpec>) -> Result<(), Failure> {
    let bytes = read_input(path)?;
    if let Some(b) = &backend {
        b.probe()?;
    }
    let out = out.unwrap_or_else(|| PathBuf::from(path.file_stem().unwrap_or_default()));
    let names = archive::unpack_to_dir(&bytes, &out, backend.as_ref())
        .map_err(|e| Failure::from(e).context(format!("unpacking {}", path.display())))?;
    let mut text = names.join("\n");
    text.push('\n');
    emit(None, text.as_bytes())
}
