use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{stats, GroupStats};
use super::BenchError;
use crate::archive::CfRecord;

pub const CSV_HEADER: &str = "group,strategy,compressor,s_old,s_new,cf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub strategy: String,
    pub compressor: String,
    pub n: usize,
    pub stats: GroupStats,
}

/// A SIFT-picked group with fewer than three members: the similarity graph
/// found almost nothing in common among that tag's images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmallClusterFlag {
    pub group: String,
    pub size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CfReport {
    pub rows: Vec<CfRecord>,
    pub stats: Vec<StatsRow>,
    pub flags: Vec<SmallClusterFlag>,
}

impl CfReport {
    /// Sorts rows and flags and recomputes the per (strategy, compressor) stats.
    pub fn from_rows(mut rows: Vec<CfRecord>, mut flags: Vec<SmallClusterFlag>) -> Self {
        rows.sort_by(|a, b| {
            natural_cmp(&a.group, &b.group)
                .then_with(|| natural_cmp(&a.strategy, &b.strategy))
                .then_with(|| natural_cmp(&a.compressor, &b.compressor))
        });
        flags.sort_by(|a, b| natural_cmp(&a.group, &b.group));
        let mut keys: Vec<(&str, &str)> = rows
            .iter()
            .map(|r| (r.strategy.as_str(), r.compressor.as_str()))
            .collect();
        keys.sort_by(|a, b| natural_cmp(a.0, b.0).then_with(|| natural_cmp(a.1, b.1)));
        keys.dedup();
        let stats = keys
            .into_iter()
            .map(|(strategy, compressor)| {
                let cfs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.strategy == strategy && r.compressor == compressor)
                    .map(|r| r.cf)
                    .collect();
                StatsRow {
                    strategy: strategy.to_string(),
                    compressor: compressor.to_string(),
                    n: cfs.len(),
                    stats: stats(&cfs).expect("every key has at least one row"),
                }
            })
            .collect();
        Self { rows, stats, flags }
    }

    pub fn stats_for(&self, strategy: &str, compressor: &str) -> Option<&GroupStats> {
        self.stats
            .iter()
            .find(|s| s.strategy == strategy && s.compressor == compressor)
            .map(|s| &s.stats)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                field(&r.group),
                field(&r.strategy),
                field(&r.compressor),
                r.s_old,
                r.s_new,
                r.cf
            );
        }
        for s in &self.stats {
            let _ = writeln!(
                out,
                "#stats,{},{},n={},max={},mean={},second_min={},min={}",
                field(&s.strategy),
                field(&s.compressor),
                s.n,
                s.stats.max,
                s.stats.mean,
                s.stats.second_min,
                s.stats.min
            );
        }
        for f in &self.flags {
            let _ = writeln!(out, "#flag,{},sift_picked_size={}", field(&f.group), f.size);
        }
        out
    }
}

/// Quotes a field when it contains a separator, quote or line break.
fn field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) || s.starts_with('#') {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

pub fn csv_report(report: &CfReport, path: &Path) -> Result<(), BenchError> {
    fs::write(path, report.to_csv()).map_err(|e| BenchError::io(path, e))
}

/// Orders digit runs by numeric value, so `g2` sorts before `g10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let db = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (na, nb) = (trim_zeros(&a[..da]), trim_zeros(&b[..db]));
                let ord = na
                    .len()
                    .cmp(&nb.len())
                    .then_with(|| na.cmp(nb))
                    .then_with(|| da.cmp(&db));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(d: &[u8]) -> &[u8] {
    let k = d.iter().take_while(|&&c| c == b'0').count();
    &d[k..]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(group: &str, strategy: &str, cf_den: u64) -> CfRecord {
        CfRecord::new(group, strategy, "lzss", 1000, cf_den).unwrap()
    }

    #[test]
    fn natural_order() {
        let mut v = vec!["g10", "g2", "g1", "m1", "g02", "top_10", "top_5", "top_2"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, ["g1", "g2", "g02", "g10", "m1", "top_2", "top_5", "top_10"]);
    }

    #[test]
    fn two_rows() {
        let report = CfReport::from_rows(vec![rec("g2", "top_5", 400), rec("g1", "top_5", 500)], vec![]);
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "g1,top_5,lzss,1000,500,2");
        assert_eq!(lines[2], "g2,top_5,lzss,1000,400,2.5");
        assert_eq!(lines[3], "#stats,top_5,lzss,n=2,max=2.5,mean=2.25,second_min=2.5,min=2");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn quoting() {
        assert_eq!(field("ext:xz -9"), "ext:xz -9");
        assert_eq!(field("ext:a,b"), "\"ext:a,b\"");
        assert_eq!(field("say \"hi\","), "\"say \"\"hi\"\",\"");
        assert_eq!(field("#x"), "\"#x\"");
    }
}
