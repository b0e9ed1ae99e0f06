//! Human rating tables and inter-rater reliability.
//!
//! Each participant's ratings are z-scored independently. A participant's
//! inter-subject correlation (IS-r) is the Pearson correlation between their
//! z-scored ratings and the mean of everyone else's; IS-r values are averaged
//! in Fisher z space. Participants whose Fisher z falls more than 2.5 sample
//! SDs below the group mean are removed in a single pass.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentId;
use crate::error::{Error, Result};
use crate::stats::{mean, oc_half_credits, pearson_r, sample_sd, zscore};

pub const EXCLUSION_SDS: f64 = 2.5;
pub const DEFAULT_RELIABILITY_THRESHOLD: f64 = 0.07;

/// |r| is clamped to this before the Fisher transform so perfect agreement
/// stays finite.
pub const FISHER_CLAMP: f64 = 1.0 - 1e-12;

pub fn fisher_z(r: f64) -> f64 {
    r.clamp(-FISHER_CLAMP, FISHER_CLAMP).atanh()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatingsTable {
    pub experiment: ExperimentId,
    pub participants: Vec<String>,
    pub items: Vec<String>,
    /// One row per participant, one column per item, values in [0, 100].
    pub raw: Vec<Vec<f64>>,
    pub zscored: Option<Vec<Vec<f64>>>,
    pub exclusion_applied: bool,
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    experiment: String,
    participant: String,
    item: String,
    rating: f64,
}

impl RatingsTable {
    pub fn new(
        experiment: ExperimentId,
        participants: Vec<String>,
        items: Vec<String>,
        raw: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let bad = |message: String| Error::Ratings {
            path: experiment.to_string(),
            message,
        };
        if raw.len() != participants.len() {
            return Err(bad(format!(
                "{} rows for {} participants",
                raw.len(),
                participants.len()
            )));
        }
        let mut seen = HashSet::new();
        for p in &participants {
            if !seen.insert(p) {
                return Err(bad(format!("duplicate participant {p:?}")));
            }
        }
        let mut seen = HashSet::new();
        for i in &items {
            if !seen.insert(i) {
                return Err(bad(format!("duplicate item {i:?}")));
            }
        }
        for (p, row) in participants.iter().zip(&raw) {
            if row.len() != items.len() {
                return Err(bad(format!("participant {p:?} rated {} of {} items", row.len(), items.len())));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=100.0).contains(*v)) {
                return Err(bad(format!("participant {p:?}: rating {v} outside [0, 100]")));
            }
        }
        Ok(RatingsTable {
            experiment,
            participants,
            items,
            raw,
            zscored: None,
            exclusion_applied: false,
        })
    }

    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn z_rows(&self) -> Result<&[Vec<f64>]> {
        self.zscored
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("{}: ratings not z-scored", self.experiment)))
    }

    /// Keeps only the given items, in the given order. Z-scores are cleared.
    pub fn restrict_items(&self, items: &[String]) -> Result<RatingsTable> {
        let pos: HashMap<&str, usize> = self
            .items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let cols: Vec<usize> = items
            .iter()
            .map(|it| {
                pos.get(it.as_str()).copied().ok_or_else(|| {
                    Error::invalid(format!("{}: no ratings for item {it:?}", self.experiment))
                })
            })
            .collect::<Result<_>>()?;
        Ok(RatingsTable {
            experiment: self.experiment.clone(),
            participants: self.participants.clone(),
            items: items.to_vec(),
            raw: self
                .raw
                .iter()
                .map(|row| cols.iter().map(|&c| row[c]).collect())
                .collect(),
            zscored: None,
            exclusion_applied: self.exclusion_applied,
        })
    }

    fn select_participants(&self, keep: &[bool]) -> RatingsTable {
        let pick = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(r, _)| r.clone())
                .collect()
        };
        RatingsTable {
            experiment: self.experiment.clone(),
            participants: self
                .participants
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(p, _)| p.clone())
                .collect(),
            items: self.items.clone(),
            raw: pick(&self.raw),
            zscored: self.zscored.as_deref().map(pick),
            exclusion_applied: self.exclusion_applied,
        }
    }
}

/// Reads a ratings file with header `experiment,participant,item,rating`.
pub fn load_ratings(path: impl AsRef<Path>) -> Result<RatingsTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(file, &path.display().to_string())
}

pub fn read_ratings<R: Read>(reader: R, source: &str) -> Result<RatingsTable> {
    let bad = |message: String| Error::Ratings {
        path: source.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["experiment", "participant", "item", "rating"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(bad(format!("header must be {}", expected.join(","))));
    }

    let mut experiment: Option<String> = None;
    let mut participants: Vec<String> = Vec::new();
    let mut items: Vec<String> = Vec::new();
    let mut p_index: HashMap<String, usize> = HashMap::new();
    let mut i_index: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();

    for rec in rdr.deserialize::<RatingRow>() {
        let row = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            bad(format!("line {line}: {e}"))
        })?;
        match &experiment {
            None => experiment = Some(row.experiment.clone()),
            Some(e) if *e != row.experiment => {
                return Err(bad(format!(
                    "mixed experiments {e:?} and {:?} in one file",
                    row.experiment
                )))
            }
            _ => {}
        }
        if !(0.0..=100.0).contains(&row.rating) {
            return Err(bad(format!(
                "participant {:?}, item {:?}: rating {} outside [0, 100]",
                row.participant, row.item, row.rating
            )));
        }
        let p = *p_index.entry(row.participant.clone()).or_insert_with(|| {
            participants.push(row.participant.clone());
            participants.len() - 1
        });
        let i = *i_index.entry(row.item.clone()).or_insert_with(|| {
            items.push(row.item.clone());
            items.len() - 1
        });
        if cells.insert((p, i), row.rating).is_some() {
            return Err(bad(format!(
                "duplicate rating for participant {:?}, item {:?}",
                row.participant, row.item
            )));
        }
    }

    let experiment = experiment.ok_or_else(|| bad("no rating rows".into()))?;
    let experiment: ExperimentId = experiment.parse()?;
    let mut raw = Vec::with_capacity(participants.len());
    for (p, name) in participants.iter().enumerate() {
        let row: Vec<f64> = (0..items.len())
            .map(|i| {
                cells.get(&(p, i)).copied().ok_or_else(|| {
                    bad(format!("participant {name:?} has no rating for item {:?}", items[i]))
                })
            })
            .collect::<Result<_>>()?;
        raw.push(row);
    }
    RatingsTable::new(experiment, participants, items, raw)
}

/// Writes the raw ratings in the long format read by [`read_ratings`].
pub fn write_ratings<W: std::io::Write>(table: &RatingsTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["experiment", "participant", "item", "rating"])?;
    let id = table.experiment.to_string();
    for (p, row) in table.participants.iter().zip(&table.raw) {
        for (item, v) in table.items.iter().zip(row) {
            w.write_record([id.as_str(), p, item, &v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Z-scores every participant's row. Participants with constant ratings are
/// dropped and returned.
pub fn zscore_participants(table: &RatingsTable) -> Result<(RatingsTable, Vec<String>)> {
    let mut keep = Vec::with_capacity(table.n_participants());
    let mut z_rows = Vec::new();
    let mut dropped = Vec::new();
    for (p, row) in table.participants.iter().zip(&table.raw) {
        match zscore(row) {
            Ok(z) => {
                keep.push(true);
                z_rows.push(z);
            }
            Err(Error::ZeroVariance(_)) => {
                log::warn!("{}: participant {p:?} gave constant ratings; dropped", table.experiment);
                keep.push(false);
                dropped.push(p.clone());
            }
            Err(e) => return Err(e),
        }
    }
    if z_rows.is_empty() {
        return Err(Error::ZeroVariance(format!(
            "{}: every participant gave constant ratings",
            table.experiment
        )));
    }
    let mut out = table.select_participants(&keep);
    out.zscored = Some(z_rows);
    Ok((out, dropped))
}

/// Leave-one-out mean rows: for each participant, the mean of all others.
fn leave_one_out_means(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_items = rows[0].len();
    let mut total = vec![0.0; n_items];
    for row in rows {
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }
    let k = (rows.len() - 1) as f64;
    rows.iter()
        .map(|row| total.iter().zip(row).map(|(t, v)| (t - v) / k).collect())
        .collect()
}

fn check_reliability_shape(table: &RatingsTable) -> Result<&[Vec<f64>]> {
    let rows = table.z_rows()?;
    if rows.len() < 3 {
        return Err(Error::invalid(format!(
            "{}: reliability needs at least 3 participants, have {}",
            table.experiment,
            rows.len()
        )));
    }
    if table.n_items() < 3 {
        return Err(Error::invalid(format!(
            "{}: reliability needs at least 3 items, have {}",
            table.experiment,
            table.n_items()
        )));
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterSubjectR {
    pub is_r: Vec<f64>,
    pub fisher_z: Vec<f64>,
    /// `tanh(mean(fisher_z))`.
    pub mean_is_r: f64,
}

/// Leave-one-out inter-subject correlation for every participant.
pub fn inter_subject_r(table: &RatingsTable) -> Result<InterSubjectR> {
    let rows = check_reliability_shape(table)?;
    let loo = leave_one_out_means(rows);
    let is_r: Vec<f64> = rows
        .iter()
        .zip(&loo)
        .zip(&table.participants)
        .map(|((row, others), p)| {
            pearson_r(row, others).map_err(|e| match e {
                Error::ZeroVariance(_) => Error::ZeroVariance(format!(
                    "{}: mean of participants other than {p:?} is constant",
                    table.experiment
                )),
                e => e,
            })
        })
        .collect::<Result<_>>()?;
    let fisher: Vec<f64> = is_r.iter().map(|&r| fisher_z(r)).collect();
    let mean_is_r = mean(&fisher).tanh();
    Ok(InterSubjectR {
        is_r,
        fisher_z: fisher,
        mean_is_r,
    })
}

/// Leave-one-out order consistency per participant and its plain mean.
pub fn inter_subject_ocp(table: &RatingsTable) -> Result<(Vec<f64>, f64)> {
    let rows = check_reliability_shape(table)?;
    let loo = leave_one_out_means(rows);
    let n = table.n_items();
    let denom = (n * (n - 1)) as f64;
    let per: Vec<f64> = rows
        .iter()
        .zip(&loo)
        .map(|(row, others)| oc_half_credits(row, others) as f64 / denom)
        .collect();
    let m = mean(&per);
    Ok((per, m))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub participants: Vec<String>,
    pub is_r: Vec<f64>,
    pub fisher_z: Vec<f64>,
    pub mean_is_r: f64,
    pub ocp: Vec<f64>,
    pub is_ocp: f64,
    /// Participants removed as outliers.
    pub excluded: Vec<String>,
    /// Participants dropped for constant ratings.
    pub constant: Vec<String>,
    pub n_items: usize,
    pub n_participants_retained: usize,
}

/// IS-r and IS-OC_p on a z-scored table, without exclusion.
pub fn reliability(table: &RatingsTable) -> Result<ReliabilityReport> {
    let r = inter_subject_r(table)?;
    let (ocp, is_ocp) = inter_subject_ocp(table)?;
    Ok(ReliabilityReport {
        participants: table.participants.clone(),
        is_r: r.is_r,
        fisher_z: r.fisher_z,
        mean_is_r: r.mean_is_r,
        ocp,
        is_ocp,
        excluded: Vec::new(),
        constant: Vec::new(),
        n_items: table.n_items(),
        n_participants_retained: table.n_participants(),
    })
}

/// Removes participants whose Fisher z lies below `mean - 2.5 sd` of the
/// group. Applied once: a table that already went through exclusion is
/// returned unchanged.
pub fn exclude_outlier_participants(
    report: &ReliabilityReport,
    table: &RatingsTable,
) -> Result<(RatingsTable, Vec<String>)> {
    if table.exclusion_applied {
        return Ok((table.clone(), Vec::new()));
    }
    if report.participants != table.participants {
        return Err(Error::invalid(format!(
            "{}: reliability report does not match the table's participants",
            table.experiment
        )));
    }
    let m = mean(&report.fisher_z);
    let sd = sample_sd(&report.fisher_z);
    let threshold = m - EXCLUSION_SDS * sd;
    let keep: Vec<bool> = report.fisher_z.iter().map(|&z| !(z < threshold)).collect();
    let retained = keep.iter().filter(|&&k| k).count();
    if retained < 3 {
        return Err(Error::invalid(format!(
            "{}: exclusion would leave {retained} participant(s)",
            table.experiment
        )));
    }
    let excluded: Vec<String> = table
        .participants
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| !k)
        .map(|(p, _)| p.clone())
        .collect();
    let mut out = table.select_participants(&keep);
    out.exclusion_applied = true;
    Ok((out, excluded))
}

/// Z-scoring, reliability, single-pass exclusion and recomputation.
/// Returns the retained z-scored table and its final report.
pub fn reliability_pipeline(table: &RatingsTable) -> Result<(RatingsTable, ReliabilityReport)> {
    let (z, constant) = zscore_participants(table)?;
    let first = reliability(&z)?;
    let (kept, excluded) = exclude_outlier_participants(&first, &z)?;
    let mut report = if excluded.is_empty() {
        first
    } else {
        reliability(&kept)?
    };
    report.excluded = excluded;
    report.constant = constant;
    Ok((kept, report))
}

/// Per-item mean z-score over retained participants, in table item order.
pub fn mean_item_ratings(table: &RatingsTable) -> Result<Vec<f64>> {
    let rows = table.z_rows()?;
    if rows.is_empty() || table.n_items() == 0 {
        return Err(Error::invalid(format!("{}: empty ratings table", table.experiment)));
    }
    let n = rows.len() as f64;
    Ok((0..table.n_items())
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n)
        .collect())
}

/// Splits experiments into those kept and those whose mean IS-r is strictly
/// below `threshold`.
pub fn flag_low_reliability<K: Clone + Ord>(
    reports: &BTreeMap<K, f64>,
    threshold: f64,
) -> (Vec<K>, Vec<K>) {
    let mut kept = Vec::new();
    let mut flagged = Vec::new();
    for (k, &r) in reports {
        if r >= threshold {
            kept.push(k.clone());
        } else {
            flagged.push(k.clone());
        }
    }
    (kept, flagged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id() -> ExperimentId {
        ExperimentId::new("animals", "size")
    }

    fn table(rows: Vec<Vec<f64>>) -> RatingsTable {
        let participants = (0..rows.len()).map(|i| format!("p{i}")).collect();
        let items = (0..rows[0].len()).map(|i| format!("item{i}")).collect();
        RatingsTable::new(id(), participants, items, rows).unwrap()
    }

    const CSV: &str = "experiment,participant,item,rating\n\
        animals/size,a,Whale,90\nanimals/size,a,Mouse,5\nanimals/size,a,Dog,40\n\
        animals/size,b,Whale,100\nanimals/size,b,Mouse,0\nanimals/size,b,Dog,55.5\n";

    #[test]
    fn loads_valid_file() {
        let t = read_ratings(CSV.as_bytes(), "t.csv").unwrap();
        assert_eq!(t.experiment, id());
        assert_eq!(t.participants, ["a", "b"]);
        assert_eq!(t.items, ["Whale", "Mouse", "Dog"]);
        assert_eq!(t.raw[1], vec![100.0, 0.0, 55.5]);
    }

    #[test]
    fn rejects_out_of_range_duplicates_and_gaps() {
        let over = CSV.replace("Dog,40", "Dog,101");
        let e = read_ratings(over.as_bytes(), "t.csv").unwrap_err().to_string();
        assert!(e.contains("101") && e.contains("\"a\""), "{e}");

        let dup = format!("{CSV}animals/size,a,Dog,41\n");
        assert!(read_ratings(dup.as_bytes(), "t.csv").is_err());

        let gap: String = CSV.lines().filter(|l| !l.contains("b,Dog")).map(|l| format!("{l}\n")).collect();
        let e = read_ratings(gap.as_bytes(), "t.csv").unwrap_err().to_string();
        assert!(e.contains("no rating"), "{e}");

        let mixed = format!("{CSV}animals/speed,c,Dog,3\n");
        assert!(read_ratings(mixed.as_bytes(), "t.csv").is_err());
    }

    #[test]
    fn write_read_round_trip() {
        let t = read_ratings(CSV.as_bytes(), "t.csv").unwrap();
        let mut buf = Vec::new();
        write_ratings(&t, &mut buf).unwrap();
        assert_eq!(read_ratings(buf.as_slice(), "t.csv").unwrap(), t);
    }

    #[test]
    fn zscore_rows_and_constant_drop() {
        let t = table(vec![vec![0.0, 50.0, 100.0], vec![40.0, 40.0, 40.0], vec![0.0, 50.0, 100.0]]);
        let (z, dropped) = zscore_participants(&t).unwrap();
        assert_eq!(dropped, ["p1"]);
        assert_eq!(z.z_rows().unwrap(), &[vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, 1.0]]);

        let all_const = table(vec![vec![3.0, 3.0, 3.0], vec![7.0, 7.0, 7.0]]);
        assert!(zscore_participants(&all_const).is_err());
    }

    #[test]
    fn identical_and_reversed_raters() {
        let row = vec![10.0, 30.0, 20.0, 80.0];
        let (z, _) = zscore_participants(&table(vec![row.clone(); 3])).unwrap();
        let r = inter_subject_r(&z).unwrap();
        assert!(r.is_r.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!((r.mean_is_r - 1.0).abs() < 1e-9);
        let (_, is_ocp) = inter_subject_ocp(&z).unwrap();
        assert_eq!(is_ocp, 1.0);

        let rev: Vec<f64> = row.iter().map(|v| 100.0 - v).collect();
        let (z, _) = zscore_participants(&table(vec![row.clone(), row.clone(), row, rev])).unwrap();
        let r = inter_subject_r(&z).unwrap();
        assert!((r.is_r[3] + 1.0).abs() < 1e-12);
        let (per, _) = inter_subject_ocp(&z).unwrap();
        assert_eq!(per[3], 0.0);
    }

    #[test]
    fn needs_three_participants() {
        let (z, _) = zscore_participants(&table(vec![vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0]])).unwrap();
        assert!(inter_subject_r(&z).is_err());
    }

    #[test]
    fn homogeneous_raters_not_excluded() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|p| (0..8).map(|i| (i * 10) as f64 + ((p * 3 + i * 7) % 5) as f64).collect())
            .collect();
        let (kept, report) = reliability_pipeline(&table(rows)).unwrap();
        assert!(report.excluded.is_empty());
        assert_eq!(kept.n_participants(), 10);
        assert!(kept.exclusion_applied);
        let (again, ex) = exclude_outlier_participants(&report, &kept).unwrap();
        assert!(ex.is_empty());
        assert_eq!(again, kept);
    }

    #[test]
    fn mean_items_by_hand() {
        let mut t = table(vec![vec![0.0; 3], vec![0.0; 3]]);
        t.zscored = Some(vec![vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, -1.0]]);
        assert_eq!(mean_item_ratings(&t).unwrap(), vec![0.0, 0.0, 0.0]);

        let mut t = table(vec![vec![0.0; 3]; 3]);
        t.zscored = Some(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![-2.0, 0.5, 0.0]]);
        assert_eq!(mean_item_ratings(&t).unwrap(), vec![1.0, 7.5 / 3.0, 3.0]);
    }

    #[test]
    fn low_reliability_boundary() {
        let m: BTreeMap<&str, f64> =
            [("a", 0.05), ("b", 0.50), ("c", 0.07)].into_iter().collect();
        let (kept, flagged) = flag_low_reliability(&m, DEFAULT_RELIABILITY_THRESHOLD);
        assert_eq!(kept, ["b", "c"]);
        assert_eq!(flagged, ["a"]);
    }

    #[test]
    fn fisher_round_trip() {
        for i in -999_999..=999_999 {
            if i % 7919 != 0 {
                continue;
            }
            let r = i as f64 / 1e6;
            assert!((fisher_z(r).tanh() - r).abs() < 1e-12);
        }
    }
}
