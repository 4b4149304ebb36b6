use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{generate, Dataset, GenPart, GenSpec, SymbolInput};
use super::eval::{evaluate, run_time_marching, EvalOptions, RolloutOptions};
use super::metrics::{relative_l2_sample, MetricReport};
use super::train::{train, LossWeights, TrainConfig, TrainLog};
use super::EvalError;
use crate::autodiff::ParamStore;
use crate::model::{Mode, ModelConfig, Prose};
use crate::pde_zoo::{
    instance_rng, sample_instance, sample_params, IcClass, ParamRange, PdeFamily, RiemannKind, N_INPUT_STAMPS,
};
use crate::solvers::{solve, SolveConfig};

/// Families of the base multi-operator experiments.
pub const BASE_FAMILIES: [PdeFamily; 5] = [
    PdeFamily::Heat,
    PdeFamily::Advection,
    PdeFamily::DiffReactR1,
    PdeFamily::DiffReactR2,
    PdeFamily::ViscousF1,
];

/// Training families of the unseen-operator study; viscous Burgers is held out.
pub const UNSEEN_OPERATOR_TRAIN: [PdeFamily; 5] = [
    PdeFamily::ViscousF2,
    PdeFamily::ViscousF3,
    PdeFamily::ViscousF4,
    PdeFamily::InviscidF1,
    PdeFamily::InviscidF2,
];

/// Families whose training ICs come from one generator, so a shared seed
/// yields identical initial data across them.
pub const COLLIDING_FAMILIES: [PdeFamily; 3] = [PdeFamily::Heat, PdeFamily::ViscousF1, PdeFamily::InviscidF1];

const STUDY2_COLUMNS: [PdeFamily; 5] = [
    PdeFamily::InviscidF1,
    PdeFamily::ViscousF3,
    PdeFamily::InviscidF2,
    PdeFamily::ViscousF4,
    PdeFamily::InviscidF3,
];

const STUDY3_COLUMNS: [PdeFamily; 3] = [PdeFamily::InviscidF1, PdeFamily::ViscousF1, PdeFamily::InviscidF2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StudyId {
    TemporalGrid,
    TimeMarching,
    Ood,
    InputClass,
    UnseenOperator,
    /// Rarefaction transfer, experiment 1..=5.
    Study2(u8),
    /// Shock interaction, experiment 1..=3.
    Study3(u8),
    AblationInput,
    AblationWeights,
}

impl StudyId {
    pub fn all() -> Vec<StudyId> {
        let mut v = vec![
            StudyId::TemporalGrid,
            StudyId::TimeMarching,
            StudyId::Ood,
            StudyId::InputClass,
            StudyId::UnseenOperator,
        ];
        v.extend((1..=5).map(StudyId::Study2));
        v.extend((1..=3).map(StudyId::Study3));
        v.extend([StudyId::AblationInput, StudyId::AblationWeights]);
        v
    }
}

impl fmt::Display for StudyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyId::TemporalGrid => write!(f, "temporal-grid"),
            StudyId::TimeMarching => write!(f, "time-marching"),
            StudyId::Ood => write!(f, "ood"),
            StudyId::InputClass => write!(f, "input-class"),
            StudyId::UnseenOperator => write!(f, "unseen-operator"),
            StudyId::Study2(j) => write!(f, "study2-exp{j}"),
            StudyId::Study3(j) => write!(f, "study3-exp{j}"),
            StudyId::AblationInput => write!(f, "ablation-input"),
            StudyId::AblationWeights => write!(f, "ablation-weights"),
        }
    }
}

impl FromStr for StudyId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StudyId::all()
            .into_iter()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| EvalError::Config(format!("unknown study '{s}'")))
    }
}

/// Train/test mixture of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub id: StudyId,
    pub mode: Mode,
    pub train: Vec<GenPart>,
    pub test: Vec<GenPart>,
    /// Target stamp offset of the test grid.
    pub test_offset: f64,
    /// Transfer studies: the family whose held-out regime is tested.
    pub target: Option<PdeFamily>,
    /// Families whose similarity to the target forms the baseline.
    pub baseline: Vec<PdeFamily>,
    pub t_end: Vec<f64>,
}

fn riemann(f: PdeFamily, kind: RiemannKind, n: usize) -> GenPart {
    GenPart::new(f, n).with_ic(IcClass::Riemann(kind))
}

impl StudySpec {
    fn base(id: StudyId, n_train: usize, n_test: usize) -> Self {
        StudySpec {
            id,
            mode: Mode::TwoToTwo,
            train: BASE_FAMILIES.iter().map(|&f| GenPart::new(f, n_train)).collect(),
            test: BASE_FAMILIES.iter().map(|&f| GenPart::new(f, n_test)).collect(),
            test_offset: 1.0,
            target: None,
            baseline: Vec::new(),
            t_end: Vec::new(),
        }
    }

    /// The registry entry for `id` with `n_train`/`n_test` instances per part.
    pub fn builtin(id: StudyId, n_train: usize, n_test: usize) -> Result<Self, EvalError> {
        let mut s = Self::base(id, n_train, n_test);
        match id {
            StudyId::TemporalGrid => s.test_offset = 0.5,
            StudyId::TimeMarching => s.t_end = vec![2.25, 2.5, 3.0],
            StudyId::Ood => {
                for p in &mut s.test {
                    p.range = ParamRange::out_of_distribution();
                }
            }
            StudyId::InputClass => {
                for p in &mut s.test {
                    p.ic = IcClass::Testing;
                }
            }
            StudyId::UnseenOperator => {
                s.train = UNSEEN_OPERATOR_TRAIN.iter().map(|&f| GenPart::new(f, n_train)).collect();
                s.test = vec![GenPart::new(PdeFamily::ViscousF1, n_test)];
            }
            StudyId::Study2(j) => {
                if !(1..=5).contains(&j) {
                    return Err(EvalError::Config(format!("study2 has experiments 1..5, got {j}")));
                }
                let target = PdeFamily::ViscousF1;
                s.mode = Mode::TwoToOne;
                s.train = vec![riemann(target, RiemannKind::Shock, n_train)];
                for (c, &f) in STUDY2_COLUMNS.iter().enumerate() {
                    let kind = if c + 1 >= j as usize { RiemannKind::Rarefaction } else { RiemannKind::Shock };
                    s.train.push(riemann(f, kind, n_train));
                }
                s.test = vec![riemann(target, RiemannKind::Rarefaction, n_test)];
                s.target = Some(target);
                s.baseline = STUDY2_COLUMNS.to_vec();
            }
            StudyId::Study3(j) => {
                if !(1..=3).contains(&j) {
                    return Err(EvalError::Config(format!("study3 has experiments 1..3, got {j}")));
                }
                let target = PdeFamily::ViscousF3;
                s.mode = Mode::TwoToOne;
                s.train = vec![riemann(target, RiemannKind::Shock, n_train)];
                for (c, &f) in STUDY3_COLUMNS.iter().enumerate() {
                    let kind = if c + 1 >= j as usize { RiemannKind::MultiShock } else { RiemannKind::Shock };
                    s.train.push(riemann(f, kind, n_train));
                }
                s.test = vec![riemann(target, RiemannKind::MultiShock, n_test)];
                s.target = Some(target);
                s.baseline = STUDY3_COLUMNS.to_vec();
            }
            StudyId::AblationInput | StudyId::AblationWeights => {}
        }
        Ok(s)
    }

    /// Two-family shock-interaction transfer: viscous cubic single shocks plus
    /// Burgers multi-shocks, tested on viscous cubic multi-shocks.
    pub fn miniature_transfer(n_train: usize, n_test: usize) -> Self {
        let target = PdeFamily::ViscousF3;
        StudySpec {
            id: StudyId::Study3(1),
            mode: Mode::TwoToOne,
            train: vec![
                riemann(target, RiemannKind::Shock, n_train),
                riemann(PdeFamily::InviscidF1, RiemannKind::MultiShock, n_train),
            ],
            test: vec![riemann(target, RiemannKind::MultiShock, n_test)],
            test_offset: 1.0,
            target: Some(target),
            baseline: vec![PdeFamily::InviscidF1],
            t_end: Vec::new(),
        }
    }

    /// Rejects a transfer spec whose training mixture contains the held-out
    /// regime of the target family.
    pub fn check_disjoint(&self) -> Result<(), EvalError> {
        let Some(target) = self.target else {
            return Ok(());
        };
        for t in &self.test {
            if self.train.iter().any(|p| p.family == target && p.ic == t.ic) {
                return Err(EvalError::Config(format!(
                    "{}: training data contains the held-out {:?} regime of {target}",
                    self.id, t.ic
                )));
            }
        }
        Ok(())
    }
}

/// Mean over `n` shared ICs of `100·‖G_t[u] − G_o[u]‖/‖G_t[u]‖` on the target
/// stamps, both operators at nominal coefficients.
pub fn similarity(target: PdeFamily, other: PdeFamily, ic: IcClass, n: usize, seed: u64) -> Result<f64, EvalError> {
    let nominal = ParamRange::new(1.0, 1.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..n as u64 {
        let mut rng = instance_rng(seed, k);
        let a = sample_instance(target, &nominal, ic, &mut rng)?;
        let mut b = a.clone();
        b.family = other;
        b.params = sample_params(other, &nominal, &mut rng)?;
        let ta = solve(&a, &SolveConfig::for_family(target))?;
        let tb = solve(&b, &SolveConfig::for_family(other))?;
        let m = N_INPUT_STAMPS * a.nx;
        if let Some(e) = relative_l2_sample(&tb.values[m..], &ta.values[m..]) {
            total += e;
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::Config("similarity: every target output vanished".into()));
    }
    Ok(total / count as f64)
}

/// Shared knobs of every experiment runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub noise: f64,
    /// ICs per pair in the similarity baseline.
    pub n_similarity: usize,
    pub eval_batch: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            model: ModelConfig::desk(Mode::TwoToTwo),
            train: TrainConfig::desk(),
            n_train: 1000,
            n_test: 200,
            seed: 0,
            noise: 0.02,
            n_similarity: 50,
            eval_batch: 32,
        }
    }
}

impl StudySettings {
    fn eval_options(&self, mode: Mode) -> EvalOptions {
        EvalOptions {
            n_in: self.train.n_in,
            symbols: self.train.symbols,
            batch_size: self.eval_batch,
            decode: mode.has_symbol_output(),
            poly_seed: self.seed,
        }
    }
}

/// One line of a study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    pub values: BTreeMap<String, f64>,
}

impl StudyRow {
    pub fn new(label: impl Into<String>) -> Self {
        StudyRow {
            label: label.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.into(), v);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub id: String,
    pub rows: Vec<StudyRow>,
    /// Study-specific pass condition, when one exists.
    pub passed: Option<bool>,
}

impl StudyReport {
    pub fn row(&self, label: &str) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn report_row(label: &str, r: &MetricReport) -> StudyRow {
    let mut row = StudyRow::new(label).with("rel_l2", r.rel_l2()).with("r2", r.r2());
    if let Some(v) = r.overall.valid_fraction {
        row = row.with("valid", v);
    }
    if let Some(s) = r.overall.symbol_error {
        row = row.with("symbol_error", s.mean);
    }
    row
}

/// A trained model with its parameters.
pub struct Fitted {
    pub model: Prose,
    pub params: ParamStore<f32>,
    pub log: TrainLog,
}

/// Initializes a `mode` model from `settings` and trains it on `data`.
pub fn fit(settings: &StudySettings, mode: Mode, data: &Dataset, train_cfg: &TrainConfig) -> Result<Fitted, EvalError> {
    let mut cfg = settings.model.clone();
    cfg.mode = mode;
    let (model, mut params) = Prose::init::<f32>(cfg, settings.seed)?;
    let log = train(&model, &mut params, data, train_cfg)?;
    Ok(Fitted { model, params, log })
}

fn gen_split(parts: &[GenPart], seed: u64, noise: f64, offset: f64) -> Result<Dataset, EvalError> {
    let mut spec = GenSpec::new(parts.to_vec(), seed);
    spec.noise = noise;
    spec.target_offset = offset;
    generate(&spec)
}

/// Trains on the spec's training mixture and scores the test mixture.
pub fn run_transfer_study(spec: &StudySpec, settings: &StudySettings) -> Result<StudyReport, EvalError> {
    spec.check_disjoint()?;
    let target = spec
        .target
        .ok_or_else(|| EvalError::Config(format!("{} is not a transfer study", spec.id)))?;
    let train_data = gen_split(&spec.train, settings.seed, settings.noise, 1.0)?;
    let test_data = gen_split(&spec.test, settings.seed.wrapping_add(1), settings.noise, 1.0)?;
    let mut tc = settings.train.clone();
    tc.symbols = SymbolInput::Known;
    let fitted = fit(settings, spec.mode, &train_data, &tc)?;
    let mut opts = settings.eval_options(spec.mode);
    opts.symbols = SymbolInput::Known;
    let (report, _) = evaluate(&fitted.model, &fitted.params, &test_data, &opts)?;
    let held_out = spec.test[0].ic;
    let mut rows = vec![report_row("prediction", &report)];
    let mut min_sim = f64::INFINITY;
    for &f in &spec.baseline {
        let e = similarity(target, f, held_out, settings.n_similarity, settings.seed.wrapping_add(2))?;
        min_sim = min_sim.min(e);
        rows.push(StudyRow::new(format!("similarity:{f}")).with("rel_l2", e));
    }
    rows.push(StudyRow::new("min_similarity").with("rel_l2", min_sim));
    Ok(StudyReport {
        id: spec.id.to_string(),
        rows,
        passed: Some(report.rel_l2() < min_sim),
    })
}

/// Known-equation or skeleton run on the base families.
pub fn run_table1(settings: &StudySettings, symbols: SymbolInput) -> Result<(MetricReport, Fitted), EvalError> {
    let spec = StudySpec::base(StudyId::TemporalGrid, settings.n_train, settings.n_test);
    let train_data = gen_split(&spec.train, settings.seed, settings.noise, 1.0)?;
    let test_data = gen_split(&spec.test, settings.seed.wrapping_add(1), settings.noise, 1.0)?;
    let mut tc = settings.train.clone();
    tc.symbols = symbols;
    let fitted = fit(settings, Mode::TwoToTwo, &train_data, &tc)?;
    let mut opts = settings.eval_options(Mode::TwoToTwo);
    opts.symbols = symbols;
    let (report, _) = evaluate(&fitted.model, &fitted.params, &test_data, &opts)?;
    Ok((report, fitted))
}

/// Study-1 runner: one model on the base families, evaluated in-distribution
/// and on the study's shifted test set.
pub fn run_study1(spec: &StudySpec, settings: &StudySettings) -> Result<StudyReport, EvalError> {
    let train_data = gen_split(&spec.train, settings.seed, settings.noise, 1.0)?;
    let fitted = fit(settings, spec.mode, &train_data, &settings.train)?;
    run_study1_with(spec, settings, &fitted)
}

/// Study-1 evaluation of an already-trained base model.
pub fn run_study1_with(spec: &StudySpec, settings: &StudySettings, fitted: &Fitted) -> Result<StudyReport, EvalError> {
    let opts = settings.eval_options(spec.mode);
    let base = StudySpec::base(spec.id, settings.n_train, settings.n_test);
    let id_test = gen_split(&base.test, settings.seed.wrapping_add(1), settings.noise, 1.0)?;
    let (id_report, _) = evaluate(&fitted.model, &fitted.params, &id_test, &opts)?;
    let mut rows = vec![report_row("in-distribution", &id_report)];
    let mut passed = None;
    if spec.id == StudyId::TimeMarching {
        let mut prev = f64::NEG_INFINITY;
        let mut monotone = true;
        let ropts = RolloutOptions {
            symbols: settings.train.symbols,
            batch_size: settings.eval_batch,
            oracle: false,
        };
        let tf = BASE_FAMILIES[0].spec().t_final;
        for &t in &spec.t_end {
            let r = run_time_marching(&fitted.model, &fitted.params, &id_test, t / tf, &ropts)?;
            monotone &= r.rel_l2 >= prev;
            prev = r.rel_l2;
            rows.push(StudyRow::new(format!("t_end={t}")).with("rel_l2", r.rel_l2));
            for w in &r.windows {
                rows.push(
                    StudyRow::new(format!("t_end={t}:window{}", w.window))
                        .with("start", w.start)
                        .with("end", w.end)
                        .with("rel_l2", w.rel_l2),
                );
            }
        }
        if let Some(&t) = spec.t_end.last() {
            let oracle = RolloutOptions { oracle: true, ..ropts };
            let r = run_time_marching(&fitted.model, &fitted.params, &id_test, t / tf, &oracle)?;
            rows.push(StudyRow::new(format!("t_end={t}:oracle")).with("rel_l2", r.rel_l2));
        }
        passed = Some(monotone);
    } else {
        let shifted = gen_split(&spec.test, settings.seed.wrapping_add(3), settings.noise, spec.test_offset)?;
        let (r, _) = evaluate(&fitted.model, &fitted.params, &shifted, &opts)?;
        rows.push(report_row(&spec.id.to_string(), &r));
    }
    Ok(StudyReport {
        id: spec.id.to_string(),
        rows,
        passed,
    })
}

/// Cross-family pairs drawn from the same initial-condition specification.
pub fn ic_collisions(data: &Dataset) -> usize {
    let mut by_ic: HashMap<String, Vec<PdeFamily>> = HashMap::new();
    for s in &data.samples {
        let key = format!("{:?}", s.instance.ic);
        by_ic.entry(key).or_default().push(s.family());
    }
    by_ic
        .values()
        .map(|fams| {
            let mut n = 0;
            for i in 0..fams.len() {
                for j in i + 1..fams.len() {
                    n += usize::from(fams[i] != fams[j]);
                }
            }
            n
        })
        .sum()
}

/// Dataset over [`COLLIDING_FAMILIES`] with ICs shared across families.
pub fn colliding_dataset(n: usize, seed: u64, noise: f64) -> Result<Dataset, EvalError> {
    let mut spec = GenSpec::families(&COLLIDING_FAMILIES, n, seed);
    spec.noise = noise;
    spec.shared_ics = true;
    generate(&spec)
}

/// Input-size sweep on the base families, then 1-to-1 against 2-to-1 with a
/// single input snapshot on the IC-colliding set.
pub fn run_input_ablation(settings: &StudySettings, sizes: &[usize]) -> Result<StudyReport, EvalError> {
    let base = StudySpec::base(StudyId::AblationInput, settings.n_train, settings.n_test);
    let train_data = gen_split(&base.train, settings.seed, settings.noise, 1.0)?;
    let test_data = gen_split(&base.test, settings.seed.wrapping_add(1), settings.noise, 1.0)?;
    let mut rows = Vec::new();
    for &n_in in sizes {
        let mut tc = settings.train.clone();
        tc.n_in = n_in;
        let fitted = fit(settings, Mode::TwoToTwo, &train_data, &tc)?;
        let mut opts = settings.eval_options(Mode::TwoToTwo);
        opts.n_in = n_in;
        opts.decode = false;
        let (r, _) = evaluate(&fitted.model, &fitted.params, &test_data, &opts)?;
        rows.push(report_row(&format!("n_in={n_in}"), &r));
    }
    let (one, two, collisions) = collision_comparison(settings)?;
    rows.push(StudyRow::new("collisions").with("count", collisions as f64));
    rows.push(report_row("1to1:n_in=1", &one));
    rows.push(report_row("2to1:n_in=1", &two));
    Ok(StudyReport {
        id: StudyId::AblationInput.to_string(),
        rows,
        passed: Some(collisions > 0 && one.rel_l2() > two.rel_l2()),
    })
}

/// 1-to-1 and 2-to-1 models with one input snapshot on colliding ICs.
/// Returns both test reports and the number of colliding training pairs.
pub fn collision_comparison(settings: &StudySettings) -> Result<(MetricReport, MetricReport, usize), EvalError> {
    let train_data = colliding_dataset(settings.n_train, settings.seed, settings.noise)?;
    let collisions = ic_collisions(&train_data);
    if collisions == 0 {
        return Err(EvalError::Generation("colliding dataset has no shared ICs".into()));
    }
    let test_data = colliding_dataset(settings.n_test, settings.seed.wrapping_add(1), settings.noise)?;
    let mut out = Vec::new();
    for mode in [Mode::OneToOne, Mode::TwoToOne] {
        let mut tc = settings.train.clone();
        tc.n_in = 1;
        tc.symbols = SymbolInput::Known;
        let fitted = fit(settings, mode, &train_data, &tc)?;
        let mut opts = settings.eval_options(mode);
        opts.n_in = 1;
        opts.symbols = SymbolInput::Known;
        out.push(evaluate(&fitted.model, &fitted.params, &test_data, &opts)?.0);
    }
    let two = out.pop().expect("two runs");
    let one = out.pop().expect("two runs");
    Ok((one, two, collisions))
}

/// Loss-weight sweep over `(α, β)` pairs.
pub fn run_weight_ablation(settings: &StudySettings, weights: &[LossWeights]) -> Result<StudyReport, EvalError> {
    let base = StudySpec::base(StudyId::AblationWeights, settings.n_train, settings.n_test);
    let train_data = gen_split(&base.train, settings.seed, settings.noise, 1.0)?;
    let test_data = gen_split(&base.test, settings.seed.wrapping_add(1), settings.noise, 1.0)?;
    let mut rows = Vec::new();
    for w in weights {
        let mut tc = settings.train.clone();
        tc.weights = *w;
        let fitted = fit(settings, Mode::TwoToTwo, &train_data, &tc)?;
        let (r, _) = evaluate(&fitted.model, &fitted.params, &test_data, &settings.eval_options(Mode::TwoToTwo))?;
        rows.push(report_row(&format!("alpha={},beta={}", w.alpha, w.beta), &r));
    }
    Ok(StudyReport {
        id: StudyId::AblationWeights.to_string(),
        rows,
        passed: None,
    })
}

/// Default weight grid: `α/β ∈ {0.2, 1, 5}`.
pub fn weight_grid() -> Vec<LossWeights> {
    vec![
        LossWeights { alpha: 1.0, beta: 5.0 },
        LossWeights { alpha: 1.0, beta: 1.0 },
        LossWeights { alpha: 5.0, beta: 1.0 },
    ]
}

/// Runs any registry study end to end.
pub fn run_study(id: StudyId, settings: &StudySettings) -> Result<StudyReport, EvalError> {
    match id {
        StudyId::AblationInput => run_input_ablation(settings, &[1, 4, 8, 16]),
        StudyId::AblationWeights => run_weight_ablation(settings, &weight_grid()),
        StudyId::Study2(_) | StudyId::Study3(_) => {
            run_transfer_study(&StudySpec::builtin(id, settings.n_train, settings.n_test)?, settings)
        }
        _ => run_study1(&StudySpec::builtin(id, settings.n_train, settings.n_test)?, settings),
    }
}
