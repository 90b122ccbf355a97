//! Over-representation analysis of a gene list against named gene sets.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneSet {
    pub name: String,
    pub description: String,
    pub genes: BTreeSet<String>,
}

/// Named gene sets over a common background universe.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneSetCollection {
    pub sets: Vec<GeneSet>,
    pub background: BTreeSet<String>,
}

impl GeneSetCollection {
    /// Intersect every set with `background`, drop sets left empty, and
    /// use `background` as the universe.
    pub fn restrict_to(self, background: BTreeSet<String>) -> GeneSetCollection {
        let sets = self
            .sets
            .into_iter()
            .filter_map(|mut s| {
                s.genes.retain(|g| background.contains(g));
                (!s.genes.is_empty()).then_some(s)
            })
            .collect();
        GeneSetCollection { sets, background }
    }
}

/// Parse `name<TAB>description<TAB>gene...` lines. The background is the
/// union of all members.
pub fn parse_gmt(text: &str, path: &Path) -> Result<GeneSetCollection> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut sets: Vec<GeneSet> = Vec::new();
    let mut names = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields[0].trim().is_empty() {
            return Err(perr(n + 1, "expected name and description".into()));
        }
        let name = fields[0].trim().to_string();
        let genes: BTreeSet<String> = fields[2..]
            .iter()
            .map(|g| g.trim())
            .filter(|g| !g.is_empty())
            .map(str::to_string)
            .collect();
        if genes.is_empty() {
            return Err(perr(n + 1, format!("gene set {name} has no genes")));
        }
        if !names.insert(name.clone()) {
            return Err(perr(n + 1, format!("duplicate gene set {name}")));
        }
        sets.push(GeneSet {
            name,
            description: fields[1].trim().to_string(),
            genes,
        });
    }
    let background = sets.iter().flat_map(|s| s.genes.iter().cloned()).collect();
    Ok(GeneSetCollection { sets, background })
}

pub fn load_gmt(path: &Path) -> Result<GeneSetCollection> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gmt(&text, path)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    let mut acc = 0.0;
    for i in 1..=n {
        acc += (i as f64).ln();
        t.push(acc);
    }
    t
}

/// `P(X >= k)` for `X ~ Hypergeometric(N = population, K = successes,
/// n = draws)`.
pub fn hypergeom_sf(k: usize, successes: usize, draws: usize, population: usize) -> Result<f64> {
    if successes > population || draws > population {
        return Err(Error::invalid(format!(
            "inconsistent counts: K={successes}, n={draws}, N={population}"
        )));
    }
    let lo = (draws + successes).saturating_sub(population);
    let hi = successes.min(draws);
    if k <= lo {
        return Ok(1.0);
    }
    if k > hi {
        return Ok(0.0);
    }
    let lf = ln_factorials(population);
    let ln_choose = |a: usize, b: usize| lf[a] - lf[b] - lf[a - b];
    let ln_total = ln_choose(population, draws);
    // smallest terms first
    let mut terms: Vec<f64> = (k..=hi)
        .map(|x| {
            (ln_choose(successes, x) + ln_choose(population - successes, draws - x) - ln_total).exp()
        })
        .collect();
    terms.sort_unstable_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>().min(1.0))
}

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn bh_fdr(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(pvalues[i] * (m as f64 / (rank + 1) as f64));
        q[i] = running.min(1.0);
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedPathway {
    pub name: String,
    pub overlap: usize,
    pub set_size: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentResult {
    /// Pathways with `q < alpha`, ascending by `(q, name)`.
    pub significant: Vec<EnrichedPathway>,
    /// Every tested set, same order.
    pub tested: Vec<EnrichedPathway>,
    pub query_size: usize,
    /// Query symbols outside the background.
    pub n_dropped: usize,
}

impl EnrichmentResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pathway,overlap,set_size,p,q\n");
        for r in &self.significant {
            writeln!(out, "{},{},{},{},{}", csv_field(&r.name), r.overlap, r.set_size, r.p, r.q).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One-sided hypergeometric test of `query` against every set, with BH
/// correction across sets.
pub fn enrich(query: &[String], sets: &GeneSetCollection, alpha: f64) -> Result<EnrichmentResult> {
    if sets.background.is_empty() {
        return Err(Error::invalid("empty background"));
    }
    let unique: BTreeSet<&String> = query.iter().collect();
    let kept: BTreeSet<&String> = unique
        .iter()
        .copied()
        .filter(|g| sets.background.contains(*g))
        .collect();
    let n_dropped = unique.len() - kept.len();
    let population = sets.background.len();
    let mut tested = Vec::with_capacity(sets.sets.len());
    for s in &sets.sets {
        let overlap = kept.iter().filter(|g| s.genes.contains(**g)).count();
        let set_size = s.genes.iter().filter(|g| sets.background.contains(*g)).count();
        tested.push(EnrichedPathway {
            name: s.name.clone(),
            overlap,
            set_size,
            p: hypergeom_sf(overlap, set_size, kept.len(), population)?,
            q: 0.0,
        });
    }
    let q = bh_fdr(&tested.iter().map(|t| t.p).collect::<Vec<_>>())?;
    for (t, q) in tested.iter_mut().zip(q) {
        t.q = q;
    }
    tested.sort_by(|a, b| a.q.total_cmp(&b.q).then_with(|| a.name.cmp(&b.name)));
    let significant = tested.iter().filter(|t| t.q < alpha).cloned().collect();
    Ok(EnrichmentResult {
        significant,
        tested,
        query_size: kept.len(),
        n_dropped,
    })
}

/// `< 0.01` below one percent, two decimals otherwise.
pub fn format_fdr(q: f64) -> String {
    if q < 0.01 {
        "< 0.01".to_string()
    } else {
        format!("{q:.2}")
    }
}

/// `Alzheimer's disease (< 0.01)` style label.
pub fn format_pathway(p: &EnrichedPathway) -> String {
    format!("{} ({})", p.name, format_fdr(p.q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coll(text: &str) -> GeneSetCollection {
        parse_gmt(text, Path::new("sets.gmt")).unwrap()
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn gmt_parsing() {
        let c = coll("PW1\tdesc\tA\tB\nPW2\t\tB\tC\tC\n\n");
        assert_eq!(c.sets.len(), 2);
        assert_eq!(c.sets[0].genes.len(), 2);
        assert_eq!(c.sets[1].genes.len(), 2);
        assert_eq!(c.background.len(), 3);
        let p = Path::new("x.gmt");
        assert!(parse_gmt("PW1\td\tA\nPW1\td\tB\n", p).is_err());
        assert!(parse_gmt("PW1\td\n", p).is_err());
        assert!(parse_gmt("PW1\n", p).is_err());
        let r = c.restrict_to(strings(&["A", "Z"]).into_iter().collect());
        assert_eq!(r.sets.len(), 1);
        assert_eq!(r.background.len(), 2);
    }

    #[test]
    fn hypergeometric_examples() {
        assert_eq!(hypergeom_sf(0, 5, 2, 10).unwrap(), 1.0);
        assert!((hypergeom_sf(2, 5, 2, 10).unwrap() - 10.0 / 45.0).abs() < 1e-14);
        assert_eq!(hypergeom_sf(3, 5, 2, 10).unwrap(), 0.0);
        assert!(hypergeom_sf(0, 11, 2, 10).is_err());
        assert!(hypergeom_sf(0, 1, 11, 10).is_err());
        for k in 0..6 {
            assert!(hypergeom_sf(k + 1, 8, 6, 20).unwrap() <= hypergeom_sf(k, 8, 6, 20).unwrap());
        }
        // large universes stay finite and ordered
        let p = hypergeom_sf(5, 100, 10, 20_000).unwrap();
        assert!(p > 0.0 && p < 1e-8);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_fdr(&[0.01, 0.02, 0.03]).unwrap(), vec![0.03; 3]);
        assert_eq!(bh_fdr(&[0.2]).unwrap(), vec![0.2]);
        assert_eq!(bh_fdr(&[1.0; 4]).unwrap(), vec![1.0; 4]);
        let q = bh_fdr(&[0.04, 0.001, 0.5, 0.03]).unwrap();
        assert!((q[1] - 0.004).abs() < 1e-15);
        assert!((q[0] - 0.04 * 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(q[3], q[0]);
        assert!(bh_fdr(&[1.2]).is_err());
        assert!(bh_fdr(&[-0.1]).is_err());
        assert!(bh_fdr(&[]).unwrap().is_empty());
    }

    #[test]
    fn enrichment_examples() {
        let c = coll("AD\tAlzheimer\tA\tB\tC\nOTHER\tx\tD\tE\n").restrict_to(
            strings(&["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L"]).into_iter().collect(),
        );
        let r = enrich(&strings(&["X1", "F", "G"]), &c, 0.05).unwrap();
        assert!(r.significant.is_empty());
        assert_eq!(r.n_dropped, 1);

        let r = enrich(&strings(&["C", "A", "B"]), &c, 0.05).unwrap();
        assert_eq!(r.significant.len(), 1);
        let top = &r.significant[0];
        assert_eq!((top.name.as_str(), top.overlap, top.set_size), ("AD", 3, 3));
        // P = 1 / C(12, 3); two sets, so q = 2p capped by the step-up
        let p = 1.0 / 220.0;
        assert!((top.p - p).abs() < 1e-15);
        assert!((top.q - 2.0 * p).abs() < 1e-15);
        assert_eq!(format_pathway(top), "AD (< 0.01)");

        let dup = enrich(&strings(&["B", "A", "C", "A"]), &c, 0.05).unwrap();
        assert_eq!(dup, r);
        assert!(enrich(&[], &GeneSetCollection { sets: vec![], background: BTreeSet::new() }, 0.05).is_err());
        assert_eq!(r.to_csv().lines().next(), Some("pathway,overlap,set_size,p,q"));
    }

    #[test]
    fn fdr_formatting() {
        assert_eq!(format_fdr(0.004), "< 0.01");
        assert_eq!(format_fdr(0.0312), "0.03");
        assert_eq!(csv_field("Alzheimer's disease, late"), "\"Alzheimer's disease, late\"");
    }
}
