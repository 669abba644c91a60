use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use simpack_bench::{image_pair, redundant_stream};
use simpack_core::features::{extract_features, match_features, ScaleSpaceParams};
use simpack_core::longrange::lzss;
use simpack_core::{compress, lr_encode, BackendSpec, LrParams};

fn long_range(c: &mut Criterion) {
    let mut g = c.benchmark_group("long_range");
    g.sample_size(10);
    for len in [1 << 20, 8 << 20] {
        let data = redundant_stream(len, 1);
        g.throughput(Throughput::Bytes(len as u64));
        g.bench_with_input(BenchmarkId::new("lr_encode", len), &data, |b, d| {
            b.iter(|| lr_encode(d, &LrParams::default()))
        });
        g.bench_with_input(BenchmarkId::new("compress_lzss", len), &data, |b, d| {
            b.iter(|| compress(d, &LrParams::default(), &BackendSpec::Lzss).unwrap())
        });
    }
    g.finish();
}

fn second_stage(c: &mut Criterion) {
    let data = redundant_stream(1 << 20, 2);
    let encoded = lzss::encode(&data);
    let mut g = c.benchmark_group("lzss");
    g.throughput(Throughput::Bytes(data.len() as u64));
    g.sample_size(10);
    g.bench_function("encode_1MiB", |b| b.iter(|| lzss::encode(&data)));
    g.bench_function("decode_1MiB", |b| b.iter(|| lzss::decode(&encoded).unwrap()));
    g.finish();
}

fn features(c: &mut Criterion) {
    let params = ScaleSpaceParams::default();
    let mut g = c.benchmark_group("features");
    g.sample_size(10);
    for size in [128u32, 256] {
        let (a, b) = image_pair(size);
        g.bench_with_input(BenchmarkId::new("extract", size), &a, |bench, img| {
            bench.iter(|| extract_features("a", img, &params).unwrap())
        });
        let fa = extract_features("a", &a, &params).unwrap();
        let fb = extract_features("b", &b, &params).unwrap();
        g.bench_function(BenchmarkId::new("match_two_sided", size), |bench| {
            bench.iter(|| match_features(&fa, &fb, 0.6, true))
        });
    }
    g.finish();
}

criterion_group!(benches, long_range, second_stage, features);
criterion_main!(benches);
