//! File formats: comparison logs, result tables, decomposition reports and
//! the resumable sampler state.
//!
//! All CSV output uses `.` decimals, LF line endings and floats with 17
//! significant digits, so files are byte-identical across platforms.

use std::io::{Read, Write};

use indexmap::IndexSet;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::{Metric, ResultRow, ResultTable};
use crate::glm::{replication_rng, LinkFunction};
use crate::graph::{ComparisonGraph, ComparisonRecord, EdgeFlow, ValueMode, VoterId};
use crate::hodge::{decompose, global_score, Energies, RidgeConfig};
use crate::sampling::{
    fiedler_update, posterior_update, random_select, supervised_select, unsupervised_select,
    FiedlerState, Pair, Policy, PosteriorState,
};
use crate::topology::{filtration, track};

pub const LOG_HEADER: [&str; 4] = ["voter_id", "item_i", "item_j", "choice"];
pub const RESULT_HEADER: [&str; 5] = ["replication", "scheme", "step", "metric", "value"];

/// Shortest exact text for a float: 17 significant digits in scientific
/// notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Integral values in `i64` range print as integers, others as
/// [`format_float`].
fn format_choice(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format_float(v)
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonLogRow {
    pub voter_id: String,
    pub item_i: String,
    pub item_j: String,
    pub choice: f64,
}

/// Rows of a comparison log with their 1-based line numbers.
pub fn read_log<R: Read>(input: R) -> Result<Vec<(u64, ComparisonLogRow)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::EmptyInput("comparison log is empty")),
        Some(h) => h?,
    };
    if header.iter().ne(LOG_HEADER) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("header must be {:?}", LOG_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let choice: f64 = rec[3].trim().parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("choice {:?} is not a number", &rec[3]),
        })?;
        if !choice.is_finite() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("choice {choice} is not finite"),
            });
        }
        rows.push((
            line,
            ComparisonLogRow {
                voter_id: rec[0].to_string(),
                item_i: rec[1].to_string(),
                item_j: rec[2].to_string(),
                choice,
            },
        ));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("comparison log has no rows"));
    }
    Ok(rows)
}

pub fn write_log<W: Write>(rows: &[ComparisonLogRow], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(LOG_HEADER)?;
    for r in rows {
        w.write_record([
            r.voter_id.as_str(),
            r.item_i.as_str(),
            r.item_j.as_str(),
            &format_choice(r.choice),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Insertion-ordered map from external labels to dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap(IndexSet<String>);

impl LabelMap {
    pub fn intern(&mut self, label: &str) -> usize {
        match self.0.get_index_of(label) {
            Some(k) => k,
            None => self.0.insert_full(label.to_string()).0,
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.get_index_of(label)
    }

    pub fn label(&self, k: usize) -> Option<&str> {
        self.0.get_index(k).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.0.iter().cloned().collect()
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub graph: ComparisonGraph,
    pub flow: EdgeFlow,
    pub items: LabelMap,
    pub voters: LabelMap,
}

/// Parses a comparison log into a graph. Items and voters get dense indices
/// in order of first appearance; records keep file order.
pub fn ingest<R: Read>(input: R, mode: ValueMode) -> Result<Ingested> {
    let rows = read_log(input)?;
    let mut items = LabelMap::default();
    let mut voters = LabelMap::default();
    let mut parsed = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        let bad = |reason: String| Error::MalformedRow { line: *line, reason };
        if row.item_i == row.item_j {
            return Err(bad(format!("item {:?} compared with itself", row.item_i)));
        }
        if mode == ValueMode::Binary && row.choice != 1.0 && row.choice != -1.0 {
            return Err(bad(format!("binary choice must be 1 or -1, got {}", row.choice)));
        }
        let v = voters.intern(&row.voter_id);
        let i = items.intern(&row.item_i);
        let j = items.intern(&row.item_j);
        parsed.push((*line, v, i, j, row.choice));
    }
    let mut graph = ComparisonGraph::with_mode(items.len(), mode);
    for (line, v, i, j, c) in parsed {
        graph
            .add_comparison(ComparisonRecord::new(VoterId(v as u32), i, j, c))
            .map_err(|e| Error::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
    }
    let flow = graph.flow();
    Ok(Ingested {
        graph,
        flow,
        items,
        voters,
    })
}

pub fn write_results<W: Write>(table: &ResultTable, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in &table.rows {
        let value = if r.metric.is_count() {
            format!("{}", r.value as u64)
        } else {
            format_float(r.value)
        };
        w.write_record([
            r.replication.to_string().as_str(),
            r.scheme.name(),
            &r.step.to_string(),
            r.metric.name(),
            &value,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> Result<ResultTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    if reader.headers()?.iter().ne(RESULT_HEADER) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("header must be {:?}", RESULT_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::MalformedRow {
            line,
            reason: format!("invalid {what}"),
        };
        if rec.len() != 5 {
            return Err(bad("field count"));
        }
        rows.push(ResultRow {
            replication: rec[0].parse().map_err(|_| bad("replication"))?,
            scheme: rec[1].parse().map_err(|_| bad("scheme"))?,
            step: rec[2].parse().map_err(|_| bad("step"))?,
            metric: rec[3].parse::<Metric>().map_err(|_| bad("metric"))?,
            value: rec[4].parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(ResultTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub mode: ValueMode,
    pub gamma: f64,
    pub records: usize,
    pub total_energy: f64,
    pub energies: Energies,
    pub scores: Vec<LabeledScore>,
    pub beta0: usize,
    pub beta1: usize,
    pub loop_free: bool,
}

/// Component energies, labeled scores (`γ = 0` gives the minimal-norm fit)
/// and the Betti numbers of the clique complex.
pub fn decompose_report(data: &Ingested, gamma: f64) -> Result<DecomposeReport> {
    let cfg = RidgeConfig::new(gamma, 1.0)?;
    let parts = decompose(&data.graph, &data.flow)?;
    let fit = global_score(&data.graph, &data.flow, &cfg)?;
    let timeline = track(filtration(&data.graph))?;
    let (beta0, beta1) = timeline.last().map_or((0, 0), |e| (e.beta0, e.beta1));
    Ok(DecomposeReport {
        mode: data.graph.mode(),
        gamma,
        records: data.graph.record_count(),
        total_energy: data.flow.norm_squared(),
        energies: parts.energies(),
        scores: fit
            .scores
            .iter()
            .enumerate()
            .map(|(k, &score)| LabeledScore {
                label: data.items.label(k).unwrap_or_default().to_string(),
                score,
            })
            .collect(),
        beta0,
        beta1,
        loop_free: beta1 == 0,
    })
}

pub const STATE_FORMAT: &str = "hrank-state";
pub const STATE_VERSION: u32 = 1;

/// Resumable active-sampling session: posterior, Laplacian and the last
/// suggested pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub n: usize,
    pub gamma: f64,
    pub sigma_eps: f64,
    /// Seed for the random policy; step `t` draws from stream `t`.
    pub seed: u64,
    /// Observations so far.
    pub t: u64,
    pub mu: Vec<f64>,
    /// `(L + γI)^{-1}`, row-major.
    pub sigma_inv: Vec<f64>,
    /// `L`, row-major.
    pub laplacian: Vec<f64>,
    pub last_selected: Option<Pair>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    format: String,
    version: u32,
    checksum: String,
    state: Session,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(n: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, v)
}

fn checksum(state: &Session) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(state)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl Session {
    pub fn new(n: usize, cfg: &RidgeConfig, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: format!("need at least 2 items, got {n}"),
            });
        }
        let post = PosteriorState::new(n, cfg)?;
        Ok(Self {
            n,
            gamma: cfg.gamma,
            sigma_eps: cfg.sigma_eps,
            seed,
            t: 0,
            mu: post.mu.iter().copied().collect(),
            sigma_inv: row_major(&post.sigma_inv),
            laplacian: vec![0.0; n * n],
            last_selected: None,
        })
    }

    pub fn posterior(&self) -> PosteriorState {
        PosteriorState {
            mu: DVector::from_column_slice(&self.mu),
            sigma_inv: from_row_major(self.n, &self.sigma_inv),
            gamma: self.gamma,
            sigma_eps: self.sigma_eps,
            t: self.t,
        }
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        from_row_major(self.n, &self.laplacian)
    }

    /// Suggests the next pair and remembers it.
    pub fn select(&mut self, policy: Policy, link: LinkFunction) -> Result<Pair> {
        let pair = match policy {
            Policy::Random => random_select(self.n, &mut replication_rng(self.seed, self.t)),
            Policy::Unsupervised => unsupervised_select(&FiedlerState::new(self.laplacian())?),
            Policy::Supervised => supervised_select(&self.posterior(), link),
        };
        self.last_selected = Some(pair);
        Ok(pair)
    }

    /// Records a label `y` on `(i, j)` (`y > 0`: `i` preferred). Returns
    /// whether the pair was the last suggestion.
    pub fn observe(&mut self, i: usize, j: usize, y: f64) -> Result<bool> {
        for k in [i, j] {
            if k >= self.n {
                return Err(Error::ItemOutOfRange { index: k, n: self.n });
            }
        }
        if i == j {
            return Err(Error::SelfComparison(i));
        }
        if !y.is_finite() {
            return Err(Error::InvalidChoice(y));
        }
        let pair = Pair::new(i, j);
        let y = if i < j { y } else { -y };
        let mut post = self.posterior();
        posterior_update(&mut post, pair, y);
        let mut fiedler = FiedlerState::new(self.laplacian())?;
        fiedler_update(&mut fiedler, pair)?;
        self.mu = post.mu.iter().copied().collect();
        self.sigma_inv = row_major(&post.sigma_inv);
        self.laplacian = row_major(fiedler.laplacian());
        self.t = post.t;
        let expected = self.last_selected == Some(pair);
        self.last_selected = None;
        Ok(expected)
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let file = StateFile {
            format: STATE_FORMAT.to_string(),
            version: STATE_VERSION,
            checksum: checksum(self)?,
            state: self.clone(),
        };
        serde_json::to_writer_pretty(&mut out, &file)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let file: StateFile = serde_json::from_reader(input)
            .map_err(|e| Error::CorruptState(format!("unreadable state file: {e}")))?;
        if file.format != STATE_FORMAT || file.version != STATE_VERSION {
            return Err(Error::CorruptState(format!(
                "unsupported state format {} v{}",
                file.format, file.version
            )));
        }
        if checksum(&file.state)? != file.checksum {
            return Err(Error::CorruptState("checksum mismatch".into()));
        }
        let s = file.state;
        let n = s.n;
        if n < 2 || s.mu.len() != n || s.sigma_inv.len() != n * n || s.laplacian.len() != n * n {
            return Err(Error::CorruptState("array sizes do not match n".into()));
        }
        if s.last_selected.is_some_and(|p| p.j >= n || p.i >= p.j) {
            return Err(Error::CorruptState("last selected pair out of range".into()));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hodge::split_bias;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 0.0, 1e21, f64::MIN_POSITIVE] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
        assert_eq!(format_choice(-1.0), "-1");
        assert_eq!(format_choice(0.25), "2.5000000000000000e-1");
    }

    #[test]
    fn three_rows_three_items() {
        let csv = "voter_id,item_i,item_j,choice\nu1,a,b,1\nu2,b,c,-1\nu1,a,c,1\n";
        let data = ingest(csv.as_bytes(), ValueMode::Binary).unwrap();
        assert_eq!(data.graph.record_count(), 3);
        assert_eq!(data.items.labels(), vec!["a", "b", "c"]);
        assert_eq!(data.voters.len(), 2);
        assert_eq!(data.flow.len(), 3);
    }

    #[test]
    fn binary_rejects_zero_with_line() {
        let csv = "voter_id,item_i,item_j,choice\nu1,a,b,1\nu2,b,c,0\n";
        match ingest(csv.as_bytes(), ValueMode::Binary) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(ingest(csv.as_bytes(), ValueMode::General).is_ok());
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(ingest("".as_bytes(), ValueMode::Binary), Err(Error::EmptyInput(_))));
        assert!(matches!(
            ingest("voter_id,item_i,item_j,choice\n".as_bytes(), ValueMode::Binary),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            ingest("voter,i,j,c\nu,a,b,1\n".as_bytes(), ValueMode::Binary),
            Err(Error::MalformedRow { line: 1, .. })
        ));
        for bad in ["u,a,b,x\n", "u,a,b\n", "u,a,a,1\n", "u,a,b,1,2\n"] {
            let csv = format!("voter_id,item_i,item_j,choice\nu,a,b,1\n{bad}");
            assert!(
                matches!(ingest(csv.as_bytes(), ValueMode::General), Err(Error::MalformedRow { line: 3, .. })),
                "{bad}"
            );
        }
        assert!(matches!("fuzzy".parse::<ValueMode>(), Err(Error::UnknownMode(_))));
    }

    #[test]
    fn opposite_orders_give_unit_bias() {
        let csv = "voter_id,item_i,item_j,choice\nu1,a,b,1\nu1,b,a,1\n";
        let data = ingest(csv.as_bytes(), ValueMode::General).unwrap();
        let (bias, _) = split_bias(&data.graph, &data.flow).unwrap();
        // both reports favour the first-listed item: bias +1 in reported order
        for (k, rec) in data.graph.records().iter().enumerate() {
            let reported = if rec.reversed { -bias[k] } else { bias[k] };
            assert!((reported - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_round_trip_is_byte_identical() {
        let rows = vec![
            ComparisonLogRow {
                voter_id: "v1".into(),
                item_i: "doc 7".into(),
                item_j: "doc 2".into(),
                choice: 1.0,
            },
            ComparisonLogRow {
                voter_id: "v2".into(),
                item_i: "doc 2".into(),
                item_j: "doc 9".into(),
                choice: -0.1,
            },
        ];
        let mut first = Vec::new();
        write_log(&rows, &mut first).unwrap();
        let back: Vec<ComparisonLogRow> = read_log(first.as_slice()).unwrap().into_iter().map(|r| r.1).collect();
        assert_eq!(back, rows);
        let mut second = Vec::new();
        write_log(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn results_csv_layout() {
        let table = ResultTable {
            rows: vec![
                ResultRow {
                    replication: 0,
                    scheme: Policy::Random,
                    step: 5,
                    metric: Metric::KendallTau,
                    value: 0.5,
                },
                ResultRow {
                    replication: 0,
                    scheme: Policy::Random,
                    step: 5,
                    metric: Metric::Beta1,
                    value: 2.0,
                },
            ],
        };
        let mut buf = Vec::new();
        write_results(&table, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "replication,scheme,step,metric,value\n0,random,5,kendall_tau,5.0000000000000000e-1\n0,random,5,beta1,2\n"
        );
        assert_eq!(read_results(buf.as_slice()).unwrap(), table);
    }

    #[test]
    fn report_for_four_cycle() {
        let csv = "voter_id,item_i,item_j,choice\nu,a,b,1\nu,b,c,1\nu,c,d,1\nu,d,a,1\n";
        let data = ingest(csv.as_bytes(), ValueMode::Binary).unwrap();
        let r = decompose_report(&data, 0.0).unwrap();
        assert_eq!((r.beta0, r.beta1, r.loop_free), (1, 1, false));
        assert!((r.energies.harmonic - 4.0).abs() < 1e-9);
        assert_eq!(r.scores.len(), 4);
        assert_eq!(r.scores[0].label, "a");
    }

    #[test]
    fn session_tie_rule_and_update() {
        let cfg = RidgeConfig::ridge(1.0);
        let mut s = Session::new(3, &cfg, 0).unwrap();
        assert_eq!(s.select(Policy::Supervised, LinkFunction::Uniform).unwrap(), Pair::new(0, 1));
        assert!(s.observe(0, 1, 1.0).unwrap());
        let next = s.select(Policy::Supervised, LinkFunction::Uniform).unwrap();
        assert_ne!(next, Pair::new(0, 1));
        let mut post = PosteriorState::new(3, &cfg).unwrap();
        posterior_update(&mut post, Pair::new(0, 1), 1.0);
        assert_eq!(next, supervised_select(&post, LinkFunction::Uniform));
        assert_eq!(s.observe(2, 0, -1.0).unwrap(), next == Pair::new(0, 2));
        assert_eq!(s.t, 2);
    }

    #[test]
    fn session_state_round_trip() {
        let mut s = Session::new(5, &RidgeConfig::ridge(0.1), 42).unwrap();
        s.observe(0, 3, 1.0).unwrap();
        s.observe(4, 1, 1.0).unwrap();
        s.select(Policy::Unsupervised, LinkFunction::Uniform).unwrap();
        let mut buf = Vec::new();
        s.save(&mut buf).unwrap();
        let mut back = Session::load(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        for policy in Policy::ALL {
            assert_eq!(
                back.select(policy, LinkFunction::BradleyTerry).unwrap(),
                s.select(policy, LinkFunction::BradleyTerry).unwrap()
            );
        }
    }

    #[test]
    fn tampered_state_is_rejected() {
        let s = Session::new(3, &RidgeConfig::default(), 1).unwrap();
        let mut buf = Vec::new();
        s.save(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"t\": 0", "\"t\": 1", 1);
        assert!(matches!(Session::load(text.as_bytes()), Err(Error::CorruptState(_))));
        assert!(matches!(Session::load("{}".as_bytes()), Err(Error::CorruptState(_))));
    }
}
