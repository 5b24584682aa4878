//! Multiclass classifiers over user feature vectors.
//!
//! Model parameters are kept in `f64`; features of either precision are
//! accepted and widened on entry.

mod forest;
mod gnb;
mod lbfgs;
mod linsvm;
mod logreg;

pub use forest::{gini, weighted_gini, DecisionTree, Forest, ForestConfig, TreeNode};
pub use gnb::GaussianNb;
pub use lbfgs::{minimize, LbfgsOutcome};
pub use linsvm::{LinearSvm, SvmConfig};
pub use logreg::{softmax_loss_gradient, LogRegConfig, LogisticRegression};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Labelled feature matrix (row-major `n x d`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    x: Vec<T>,
    n: usize,
    d: usize,
    y: Vec<usize>,
    class_names: Vec<String>,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: Vec<T>, d: usize, y: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if d == 0 || x.len() % d != 0 {
            return Err(Error::data("feature matrix width does not divide its length"));
        }
        let n = x.len() / d;
        if y.len() != n {
            return Err(Error::data(format!("{} labels for {n} feature rows", y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= class_names.len()) {
            return Err(Error::data(format!("label {bad} outside {} classes", class_names.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("features contain non-finite values"));
        }
        Ok(Dataset { x, n, d, y, class_names })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn features(&self) -> &[T] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes()];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            x,
            n: idx.len(),
            d: self.d,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    fn features_f64(&self) -> Vec<f64> {
        self.x.iter().map(|v| v.as_f64()).collect()
    }
}

/// Per-feature centering and scaling fitted on training rows. Constant
/// features keep unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[f64], n: usize, d: usize) -> Self {
        let mut mean = vec![0.0; d];
        for row in x.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for row in x.chunks_exact(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n.max(1) as f64).sqrt();
                if sd > 1e-12 * (1.0 + m.abs()) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply<T: Real>(&self, row: &[T]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v.as_f64() - m) / s)
            .collect()
    }

    pub fn apply_all(&self, x: &[f64], d: usize) -> Vec<f64> {
        x.chunks_exact(d).flat_map(|r| self.apply(r)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    LogReg,
    Gnb,
    LinSvm,
    Rf,
    Majority,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::LogReg,
        ClassifierKind::Gnb,
        ClassifierKind::LinSvm,
        ClassifierKind::Rf,
        ClassifierKind::Majority,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::LogReg => "logreg",
            ClassifierKind::Gnb => "gnb",
            ClassifierKind::LinSvm => "linsvm",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Majority => "majority",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logreg" | "lr" => Ok(ClassifierKind::LogReg),
            "gnb" | "nb" => Ok(ClassifierKind::Gnb),
            "linsvm" | "svm" | "svm-linear" => Ok(ClassifierKind::LinSvm),
            "rf" | "forest" => Ok(ClassifierKind::Rf),
            "majority" | "mj" => Ok(ClassifierKind::Majority),
            k @ ("svm-rbf" | "svm-poly" | "rbf" | "poly") => Err(Error::config(format!(
                "classifier {k:?} is not available: kernel SVMs are out of scope, only the linear SVM (linsvm) is implemented"
            ))),
            other => Err(Error::config(format!(
                "unknown classifier {other:?} (expected one of logreg, gnb, linsvm, rf, majority)"
            ))),
        }
    }
}

/// Classifier choice plus hyperparameters for every kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub logreg: LogRegConfig,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            kind: ClassifierKind::LogReg,
            logreg: LogRegConfig::default(),
            svm: SvmConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

impl ClassifierSpec {
    pub fn of(kind: ClassifierKind) -> Self {
        ClassifierSpec { kind, ..Default::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.svm.seed = seed;
        self.forest.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    LogReg(LogisticRegression),
    Gnb(GaussianNb),
    LinSvm(LinearSvm),
    Rf(Forest),
    Majority { class: usize },
}

/// A trained multiclass predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub class_names: Vec<String>,
    pub dim: usize,
    pub params: ModelParams,
}

const MODEL_FORMAT: &str = "leaning-classifier";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: ClassifierModel,
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        match self.params {
            ModelParams::LogReg(_) => ClassifierKind::LogReg,
            ModelParams::Gnb(_) => ClassifierKind::Gnb,
            ModelParams::LinSvm(_) => ClassifierKind::LinSvm,
            ModelParams::Rf(_) => ClassifierKind::Rf,
            ModelParams::Majority { .. } => ClassifierKind::Majority,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn predict<T: Real>(&self, x: &[T]) -> usize {
        debug_assert_eq!(x.len(), self.dim);
        match &self.params {
            ModelParams::LogReg(m) => argmax(&m.scores(x)),
            ModelParams::Gnb(m) => argmax(&m.joint_log_likelihood(x)),
            ModelParams::LinSvm(m) => argmax(&m.scores(x)),
            ModelParams::Rf(m) => m.predict(x),
            ModelParams::Majority { class } => *class,
        }
    }

    /// Class probabilities, for the kinds that define them.
    pub fn predict_proba<T: Real>(&self, x: &[T]) -> Option<Vec<f64>> {
        match &self.params {
            ModelParams::LogReg(m) => Some(softmax(&m.scores(x))),
            ModelParams::Gnb(m) => Some(softmax(&m.joint_log_likelihood(x))),
            ModelParams::Rf(m) => Some(m.vote_fractions(x)),
            _ => None,
        }
    }

    pub fn predict_all<T: Real>(&self, data: &Dataset<T>) -> Vec<usize> {
        (0..data.len()).map(|i| self.predict(data.row(i))).collect()
    }

    pub fn accuracy<T: Real>(&self, data: &Dataset<T>) -> f64 {
        let hits = (0..data.len()).filter(|&i| self.predict(data.row(i)) == data.labels()[i]).count();
        hits as f64 / data.len().max(1) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::data(format!(
                "unsupported model container {} v{}",
                file.format, file.version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn train_majority<T: Real>(data: &Dataset<T>) -> Result<ClassifierModel> {
    if data.is_empty() {
        return Err(Error::data("majority baseline needs at least one sample"));
    }
    let counts = data.class_counts();
    let class = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    Ok(ClassifierModel {
        class_names: data.class_names().to_vec(),
        dim: data.dim(),
        params: ModelParams::Majority { class },
    })
}

/// Falls back to a constant predictor when fewer than two classes are present.
fn degenerate<T: Real>(data: &Dataset<T>, kind: ClassifierKind) -> Result<Option<ClassifierModel>> {
    if data.is_empty() {
        return Err(Error::data(format!("{kind} needs at least one training sample")));
    }
    let present = data.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        log::warn!("{kind}: training data has a single class; predicting it everywhere");
        return train_majority(data).map(Some);
    }
    Ok(None)
}

pub fn train_logreg<T: Real>(data: &Dataset<T>, cfg: &LogRegConfig) -> Result<ClassifierModel> {
    if let Some(m) = degenerate(data, ClassifierKind::LogReg)? {
        return Ok(m);
    }
    Ok(ClassifierModel {
        class_names: data.class_names().to_vec(),
        dim: data.dim(),
        params: ModelParams::LogReg(LogisticRegression::fit(data, cfg)?),
    })
}

pub fn train_gnb<T: Real>(data: &Dataset<T>) -> Result<ClassifierModel> {
    if data.is_empty() {
        return Err(Error::data("gnb needs at least one training sample"));
    }
    Ok(ClassifierModel {
        class_names: data.class_names().to_vec(),
        dim: data.dim(),
        params: ModelParams::Gnb(GaussianNb::fit(data)),
    })
}

pub fn train_linsvm<T: Real>(data: &Dataset<T>, cfg: &SvmConfig) -> Result<ClassifierModel> {
    if let Some(m) = degenerate(data, ClassifierKind::LinSvm)? {
        return Ok(m);
    }
    Ok(ClassifierModel {
        class_names: data.class_names().to_vec(),
        dim: data.dim(),
        params: ModelParams::LinSvm(LinearSvm::fit(data, cfg)?),
    })
}

pub fn train_rf<T: Real>(data: &Dataset<T>, cfg: &ForestConfig) -> Result<ClassifierModel> {
    if data.len() < 2 {
        return Err(Error::data("random forest needs at least two samples"));
    }
    Ok(ClassifierModel {
        class_names: data.class_names().to_vec(),
        dim: data.dim(),
        params: ModelParams::Rf(Forest::fit(data, cfg)?),
    })
}

pub fn train<T: Real>(data: &Dataset<T>, spec: &ClassifierSpec) -> Result<ClassifierModel> {
    match spec.kind {
        ClassifierKind::LogReg => train_logreg(data, &spec.logreg),
        ClassifierKind::Gnb => train_gnb(data),
        ClassifierKind::LinSvm => train_linsvm(data, &spec.svm),
        ClassifierKind::Rf => train_rf(data, &spec.forest),
        ClassifierKind::Majority => train_majority(data),
    }
}
