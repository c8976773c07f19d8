use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConfusionCounts, Metrics};

/// Mean with nearest-rank 10th and 90th percentiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Nearest-rank percentile: the `ceil(q/100 · n)`-th smallest value (1-based, at least 1).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn aggregate(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty set"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        p10: nearest_rank(&sorted, 10.0),
        p90: nearest_rank(&sorted, 90.0),
    })
}

/// Empirical CDF: one `(value, fraction ≤ value)` step per distinct value.
pub fn f1_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot build a CDF of an empty set"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match steps.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => steps.push((v, frac)),
        }
    }
    if let Some(last) = steps.last_mut() {
        last.1 = 1.0;
    }
    Ok(steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Reference,
    Federated,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Reference => "reference",
            Scenario::Federated => "federated",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(Scenario::Reference),
            "federated" => Ok(Scenario::Federated),
            other => Err(Error::format(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Deprived,
    Trained,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Deprived => "deprived",
            Role::Trained => "trained",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deprived" => Ok(Role::Deprived),
            "trained" => Ok(Role::Trained),
            other => Err(Error::format(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricName {
    Pd,
    Pfa,
    F1,
    Accuracy,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [
        MetricName::Pd,
        MetricName::Pfa,
        MetricName::F1,
        MetricName::Accuracy,
    ];

    pub fn pick(self, m: &Metrics) -> Option<f64> {
        match self {
            MetricName::Pd => m.pd,
            MetricName::Pfa => m.pfa,
            MetricName::F1 => m.f1,
            MetricName::Accuracy => m.accuracy,
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::Pd => "pd",
            MetricName::Pfa => "pfa",
            MetricName::F1 => "f1",
            MetricName::Accuracy => "accuracy",
        })
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pd" => Ok(MetricName::Pd),
            "pfa" => Ok(MetricName::Pfa),
            "f1" => Ok(MetricName::F1),
            "accuracy" => Ok(MetricName::Accuracy),
            other => Err(Error::format(format!("unknown metric {other:?}"))),
        }
    }
}

/// Grid cell: `(idw exponent, neighbour count)`; both absent for the reference scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub idw_p: Option<f64>,
    pub neighbors: Option<usize>,
}

impl Cell {
    pub const REFERENCE: Cell = Cell {
        idw_p: None,
        neighbors: None,
    };

    pub fn federated(idw_p: f64, neighbors: usize) -> Self {
        Self {
            idw_p: Some(idw_p),
            neighbors: Some(neighbors),
        }
    }

    fn key(&self) -> (Option<u64>, Option<usize>) {
        (self.idw_p.map(f64::to_bits), self.neighbors)
    }
}

/// Pooled test-fold confusion counts of one sensor in one deprivation rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitResult {
    pub cell: Cell,
    /// Deprived sensor of the rotation, if any.
    pub rotation: Option<usize>,
    pub sensor: usize,
    pub role: Role,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub cell: Cell,
    pub role: Role,
    pub metric: MetricName,
    /// `None` when no unit had the metric defined.
    pub summary: Option<Summary>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfRow {
    pub scenario: Scenario,
    pub cell: Cell,
    pub f1: f64,
    pub cum_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub units: Vec<UnitResult>,
    pub rows: Vec<SummaryRow>,
    pub cdf: Vec<CdfRow>,
    /// Ordered `key=value` pairs for the run manifest.
    pub manifest: Vec<(String, String)>,
}

impl ExperimentReport {
    /// Builds the summary and CDF tables from unit results.
    ///
    /// Summary rows cover every (cell, role) present, one row per metric; the
    /// F1 CDF of a cell pools every unit of that cell regardless of role.
    pub fn from_units(
        scenario: Scenario,
        units: Vec<UnitResult>,
        manifest: Vec<(String, String)>,
    ) -> Self {
        let cells = distinct_cells(units.iter().map(|u| u.cell));
        let mut rows = Vec::new();
        let mut cdf = Vec::new();
        for cell in &cells {
            let in_cell: Vec<&UnitResult> =
                units.iter().filter(|u| u.cell.key() == cell.key()).collect();
            for role in [Role::Deprived, Role::Trained] {
                let with_role: Vec<&&UnitResult> =
                    in_cell.iter().filter(|u| u.role == role).collect();
                if with_role.is_empty() {
                    continue;
                }
                for metric in MetricName::ALL {
                    let values: Vec<f64> = with_role
                        .iter()
                        .filter_map(|u| metric.pick(&u.counts.metrics()))
                        .collect();
                    rows.push(SummaryRow {
                        scenario,
                        cell: *cell,
                        role,
                        metric,
                        summary: aggregate(&values).ok(),
                        n: values.len(),
                    });
                }
            }
            let f1s: Vec<f64> = in_cell
                .iter()
                .filter_map(|u| u.counts.metrics().f1)
                .collect();
            if let Ok(steps) = f1_cdf(&f1s) {
                cdf.extend(steps.into_iter().map(|(f1, cum_frac)| CdfRow {
                    scenario,
                    cell: *cell,
                    f1,
                    cum_frac,
                }));
            }
        }
        Self {
            scenario,
            units,
            rows,
            cdf,
            manifest,
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        distinct_cells(
            self.rows
                .iter()
                .map(|r| r.cell)
                .chain(self.cdf.iter().map(|r| r.cell)),
        )
    }

    pub fn summary(&self, cell: Cell, role: Role, metric: MetricName) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.cell.key() == cell.key() && r.role == role && r.metric == metric)
    }

    /// Mean of `metric` over the units of `role` in `cell`.
    pub fn mean(&self, cell: Cell, role: Role, metric: MetricName) -> Option<f64> {
        self.summary(cell, role, metric)
            .and_then(|r| r.summary)
            .map(|s| s.mean)
    }

    /// Max − min of the F1 CDF support in `cell`.
    pub fn f1_spread(&self, cell: Cell) -> Option<f64> {
        let values: Vec<f64> = self
            .cdf
            .iter()
            .filter(|r| r.cell.key() == cell.key())
            .map(|r| r.f1)
            .collect();
        let min = values.iter().copied().reduce(f64::min)?;
        let max = values.iter().copied().reduce(f64::max)?;
        Some(max - min)
    }
}

fn distinct_cells(cells: impl Iterator<Item = Cell>) -> Vec<Cell> {
    let mut seen = BTreeSet::new();
    cells.filter(|c| seen.insert(c.key())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadRow {
    pub cell: Cell,
    pub spread_a: Option<f64>,
    pub spread_b: Option<f64>,
}

impl SpreadRow {
    /// `spread_b − spread_a` when both are defined.
    pub fn difference(&self) -> Option<f64> {
        Some(self.spread_b? - self.spread_a?)
    }
}

/// Per-cell F1 spread of two reports over the same grid.
pub fn compare_spread(a: &ExperimentReport, b: &ExperimentReport) -> Result<Vec<SpreadRow>> {
    let cells_a = a.cells();
    let cells_b = b.cells();
    let keys_a: BTreeSet<_> = cells_a.iter().map(Cell::key).collect();
    let keys_b: BTreeSet<_> = cells_b.iter().map(Cell::key).collect();
    if keys_a != keys_b {
        return Err(Error::invalid("reports cover different grid cells"));
    }
    Ok(cells_a
        .into_iter()
        .map(|cell| SpreadRow {
            cell,
            spread_a: a.f1_spread(cell),
            spread_b: b.f1_spread(cell),
        })
        .collect())
}

pub const REPORT_HEADER: [&str; 9] = [
    "scenario", "idw_p", "neighbors", "role", "metric", "mean", "p10", "p90", "n",
];
pub const CDF_HEADER: [&str; 5] = ["scenario", "idw_p", "neighbors", "f1", "cum_frac"];
pub const UNITS_HEADER: [&str; 11] = [
    "scenario", "idw_p", "neighbors", "rotation", "sensor", "role", "tp", "fp", "tn", "fn",
    "f1",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn cell_fields(cell: &Cell) -> [String; 2] {
    [opt(cell.idw_p), opt(cell.neighbors)]
}

pub fn write_report_csv<W: io::Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        let [p, k] = cell_fields(&r.cell);
        w.write_record([
            r.scenario.to_string(),
            p,
            k,
            r.role.to_string(),
            r.metric.to_string(),
            opt(r.summary.map(|s| s.mean)),
            opt(r.summary.map(|s| s.p10)),
            opt(r.summary.map(|s| s.p90)),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf_csv<W: io::Write>(writer: W, rows: &[CdfRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CDF_HEADER)?;
    for r in rows {
        let [p, k] = cell_fields(&r.cell);
        w.write_record([
            r.scenario.to_string(),
            p,
            k,
            r.f1.to_string(),
            r.cum_frac.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_units_csv<W: io::Write>(
    writer: W,
    scenario: Scenario,
    units: &[UnitResult],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(UNITS_HEADER)?;
    for u in units {
        let [p, k] = cell_fields(&u.cell);
        let c = &u.counts;
        w.write_record([
            scenario.to_string(),
            p,
            k,
            opt(u.rotation),
            u.sensor.to_string(),
            u.role.to_string(),
            c.true_pos.to_string(),
            c.false_pos.to_string(),
            c.true_neg.to_string(),
            c.false_neg.to_string(),
            opt(c.metrics().f1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt<T: FromStr>(s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<T>()
        .map(Some)
        .map_err(|_| Error::format(format!("cannot parse {s:?}")))
}

fn parse_req<T: FromStr>(s: &str) -> Result<T> {
    parse_opt(s)?.ok_or_else(|| Error::format("missing required value"))
}

fn check_header(rd: &mut csv::Reader<impl io::Read>, expected: &[&str]) -> Result<()> {
    let headers = rd.headers()?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::format(format!(
            "unexpected header, expected {}",
            expected.join(",")
        )));
    }
    Ok(())
}

pub fn read_report_csv<R: io::Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    check_header(&mut rd, &REPORT_HEADER)?;
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let mean: Option<f64> = parse_opt(&rec[5])?;
            let p10: Option<f64> = parse_opt(&rec[6])?;
            let p90: Option<f64> = parse_opt(&rec[7])?;
            let summary = match (mean, p10, p90) {
                (Some(mean), Some(p10), Some(p90)) => Some(Summary { mean, p10, p90 }),
                (None, None, None) => None,
                _ => return Err(Error::format("partially empty summary row")),
            };
            Ok(SummaryRow {
                scenario: rec[0].parse()?,
                cell: Cell {
                    idw_p: parse_opt(&rec[1])?,
                    neighbors: parse_opt(&rec[2])?,
                },
                role: rec[3].parse()?,
                metric: rec[4].parse()?,
                summary,
                n: parse_req(&rec[8])?,
            })
        })
        .collect()
}

pub fn read_cdf_csv<R: io::Read>(reader: R) -> Result<Vec<CdfRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    check_header(&mut rd, &CDF_HEADER)?;
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(CdfRow {
                scenario: rec[0].parse()?,
                cell: Cell {
                    idw_p: parse_opt(&rec[1])?,
                    neighbors: parse_opt(&rec[2])?,
                },
                f1: parse_req(&rec[3])?,
                cum_frac: parse_req(&rec[4])?,
            })
        })
        .collect()
}

pub fn manifest_text(manifest: &[(String, String)]) -> String {
    manifest
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

pub fn parse_manifest(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::format(format!("manifest line without '=': {l:?}")))
        })
        .collect()
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub cdf: PathBuf,
    pub units: PathBuf,
    pub manifest: PathBuf,
}

impl ReportFiles {
    pub fn new(out_dir: &Path, scenario: Scenario) -> Self {
        Self {
            report: out_dir.join(format!("{scenario}_report.csv")),
            cdf: out_dir.join(format!("{scenario}_cdf.csv")),
            units: out_dir.join(format!("{scenario}_units.csv")),
            manifest: out_dir.join(format!("{scenario}_manifest.txt")),
        }
    }

    fn all(&self) -> [&PathBuf; 4] {
        [&self.report, &self.cdf, &self.units, &self.manifest]
    }
}

/// Writes `<scenario>_report.csv`, `<scenario>_cdf.csv`, `<scenario>_units.csv`
/// and `<scenario>_manifest.txt` into `out_dir`. Existing files are replaced
/// only when `overwrite` is set.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path, overwrite: bool) -> Result<ReportFiles> {
    fs::create_dir_all(out_dir)?;
    let files = ReportFiles::new(out_dir, report.scenario);
    if !overwrite {
        if let Some(existing) = files.all().into_iter().find(|p| p.exists()) {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::AlreadyExists,
                format!("{} exists (pass overwrite to replace it)", existing.display()),
            )));
        }
    }
    write_report_csv(fs::File::create(&files.report)?, &report.rows)?;
    write_cdf_csv(fs::File::create(&files.cdf)?, &report.cdf)?;
    write_units_csv(fs::File::create(&files.units)?, report.scenario, &report.units)?;
    fs::write(&files.manifest, manifest_text(&report.manifest))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_one_to_ten() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = aggregate(&v).unwrap();
        assert_eq!(s.mean, 5.5);
        assert_eq!(s.p10, 1.0);
        assert_eq!(s.p90, 9.0);
    }

    #[test]
    fn aggregate_single_and_empty() {
        let s = aggregate(&[0.42]).unwrap();
        assert_eq!((s.mean, s.p10, s.p90), (0.42, 0.42, 0.42));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn cdf_steps() {
        let steps = f1_cdf(&[0.5, 1.0, 0.5]).unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0].0, 0.5);
        assert!((steps[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(steps[1], (1.0, 1.0));
        assert_eq!(f1_cdf(&[0.3]).unwrap(), vec![(0.3, 1.0)]);
        assert!(f1_cdf(&[]).is_err());
    }

    fn unit(cell: Cell, sensor: usize, role: Role, tp: u64, fp: u64) -> UnitResult {
        UnitResult {
            cell,
            rotation: Some(0),
            sensor,
            role,
            counts: ConfusionCounts {
                true_pos: tp,
                false_pos: fp,
                true_neg: 10 - fp,
                false_neg: 10 - tp,
            },
        }
    }

    fn sample_report(scenario: Scenario, cells: &[Cell]) -> ExperimentReport {
        let mut units = Vec::new();
        for (i, &cell) in cells.iter().enumerate() {
            units.push(unit(cell, 0, Role::Deprived, 4 + i as u64, 2));
            units.push(unit(cell, 1, Role::Trained, 9, 1));
            units.push(unit(cell, 2, Role::Trained, 8, 0));
        }
        ExperimentReport::from_units(scenario, units, vec![("seed".into(), "1".into())])
    }

    #[test]
    fn report_tables() {
        let r = sample_report(Scenario::Federated, &[Cell::federated(0.0, 1)]);
        // 2 roles × 4 metrics
        assert_eq!(r.rows.len(), 8);
        let pd = r.mean(Cell::federated(0.0, 1), Role::Trained, MetricName::Pd).unwrap();
        assert!((pd - 0.85).abs() < 1e-12);
        assert_eq!(r.cdf.last().unwrap().cum_frac, 1.0);
        assert!(r.f1_spread(Cell::federated(0.0, 1)).unwrap() > 0.0);
    }

    #[test]
    fn spread_comparison() {
        let cells = [Cell::federated(0.0, 3), Cell::federated(3.0, 3)];
        let a = sample_report(Scenario::Federated, &cells);
        for row in compare_spread(&a, &a).unwrap() {
            assert_eq!(row.difference(), Some(0.0));
        }
        let b = sample_report(Scenario::Federated, &cells[..1]);
        assert!(compare_spread(&a, &b).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = sample_report(
            Scenario::Federated,
            &[Cell::federated(0.0, 1), Cell::federated(2.5, 3)],
        );
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &r.rows).unwrap();
        assert_eq!(read_report_csv(&buf[..]).unwrap(), r.rows);
        let mut buf = Vec::new();
        write_cdf_csv(&mut buf, &r.cdf).unwrap();
        assert_eq!(read_cdf_csv(&buf[..]).unwrap(), r.cdf);
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = ExperimentReport::from_units(Scenario::Reference, vec![], vec![]);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&r, dir.path(), false).unwrap();
        assert_eq!(
            fs::read_to_string(&files.report).unwrap(),
            format!("{}\n", REPORT_HEADER.join(","))
        );
        assert_eq!(
            fs::read_to_string(&files.cdf).unwrap(),
            format!("{}\n", CDF_HEADER.join(","))
        );
    }

    #[test]
    fn overwrite_requires_flag() {
        let r = sample_report(Scenario::Reference, &[Cell::REFERENCE]);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, dir.path(), false).unwrap();
        let err = emit_report(&r, dir.path(), false).unwrap_err();
        assert!(matches!(err, Error::Io(ref e) if e.kind() == io::ErrorKind::AlreadyExists));
        emit_report(&r, dir.path(), true).unwrap();
        let files = ReportFiles::new(dir.path(), Scenario::Reference);
        let back = read_report_csv(fs::File::open(files.report).unwrap()).unwrap();
        assert_eq!(back, r.rows);
        let manifest = parse_manifest(&fs::read_to_string(files.manifest).unwrap()).unwrap();
        assert_eq!(manifest, r.manifest);
    }
}
