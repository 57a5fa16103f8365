//! Substrate classifier emulation and confusion-matrix metrics.
//!
//! The emulator reproduces a binary classifier's per-class recall with a
//! seeded random stream. Anything implementing [`SubstrateClassifier`] can
//! stand in for it; the dispersal and metrics code only see [`Prediction`]s.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::reefworld::SubstrateClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted: SubstrateClass,
    pub frame_id: u64,
    pub timestamp: f64,
}

/// Per-frame substrate classifier.
///
/// Implementations receive the ground truth so that emulators can model an
/// error process; real or truth-oblivious classifiers are free to ignore it.
pub trait SubstrateClassifier: Send {
    fn classify_frame(&mut self, truth: SubstrateClass, timestamp: f64) -> Prediction;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// Probability that a suitable frame is predicted suitable.
    pub recall_suitable: f64,
    /// Probability that an unsuitable frame is predicted unsuitable.
    pub recall_unsuitable: f64,
    pub rng_seed: u64,
}

impl ClassifierModel {
    pub fn new(recall_suitable: f64, recall_unsuitable: f64, rng_seed: u64) -> Result<Self> {
        let m = Self { recall_suitable, recall_unsuitable, rng_seed };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("recall_suitable", self.recall_suitable), ("recall_unsuitable", self.recall_unsuitable)] {
            ensure((0.0..=1.0).contains(&r), || format!("{name} must be in [0, 1], got {r}"))?;
        }
        Ok(())
    }

    pub fn recall(&self, truth: SubstrateClass) -> f64 {
        match truth {
            SubstrateClass::Suitable => self.recall_suitable,
            SubstrateClass::Unsuitable => self.recall_unsuitable,
        }
    }
}

/// Named calibrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldScenario {
    /// Sparse reef field deployment.
    LoomisField,
    /// Dense reef field deployment.
    WatsonField,
    /// Held-out test set of the jointly trained model.
    CombinedTest,
}

impl FieldScenario {
    pub fn name(self) -> &'static str {
        match self {
            FieldScenario::LoomisField => "loomis-field",
            FieldScenario::WatsonField => "watson-field",
            FieldScenario::CombinedTest => "combined-test",
        }
    }
}

impl FromStr for FieldScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loomis-field" | "LoomisFieldModel" => Ok(FieldScenario::LoomisField),
            "watson-field" | "WatsonFieldModel" => Ok(FieldScenario::WatsonField),
            "combined-test" | "CombinedTestModel" => Ok(FieldScenario::CombinedTest),
            other => Err(Error::Config(format!("unknown classifier model `{other}`"))),
        }
    }
}

/// Recalls that reproduce the field accounting: each class's recall is the
/// share of that class's ground-truth area the on-board model got right.
pub fn calibrate_model(target: FieldScenario, seed: u64) -> ClassifierModel {
    let (recall_suitable, recall_unsuitable) = match target {
        FieldScenario::LoomisField => (46.27 / 46.85, 53.06 / 53.15),
        FieldScenario::WatsonField => (89.28 / 90.41, 9.49 / 9.59),
        FieldScenario::CombinedTest => (0.9947, 0.9947),
    };
    ClassifierModel { recall_suitable, recall_unsuitable, rng_seed: seed }
}

/// Seeded emulator. Each frame consumes exactly one uniform draw, whatever the
/// recalls, so runs with different recalls share the same stream structure.
#[derive(Debug, Clone)]
pub struct EmulatedClassifier {
    model: ClassifierModel,
    rng: ChaCha8Rng,
    next_frame: u64,
    sticky_frames: u32,
    sticky_left: u32,
}

impl EmulatedClassifier {
    pub fn new(model: ClassifierModel) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.rng_seed),
            model,
            next_frame: 0,
            sticky_frames: 0,
            sticky_left: 0,
        })
    }

    /// After an error, the next `frames - 1` frames are also misclassified.
    /// Values of 0 or 1 keep errors independent.
    pub fn with_sticky_errors(mut self, frames: u32) -> Self {
        self.sticky_frames = frames;
        self
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }
}

impl SubstrateClassifier for EmulatedClassifier {
    fn classify_frame(&mut self, truth: SubstrateClass, timestamp: f64) -> Prediction {
        let u: f64 = self.rng.random();
        let wrong = if self.sticky_left > 0 {
            self.sticky_left -= 1;
            true
        } else if u >= self.model.recall(truth) {
            self.sticky_left = self.sticky_frames.saturating_sub(1);
            true
        } else {
            false
        };
        let frame_id = self.next_frame;
        self.next_frame += 1;
        Prediction { predicted: if wrong { truth.flipped() } else { truth }, frame_id, timestamp }
    }
}

/// Ignores the scene and always reports the same class.
#[derive(Debug, Clone)]
pub struct FixedClassifier {
    class: SubstrateClass,
    next_frame: u64,
}

impl FixedClassifier {
    pub fn new(class: SubstrateClass) -> Self {
        Self { class, next_frame: 0 }
    }
}

impl SubstrateClassifier for FixedClassifier {
    fn classify_frame(&mut self, _truth: SubstrateClass, timestamp: f64) -> Prediction {
        let frame_id = self.next_frame;
        self.next_frame += 1;
        Prediction { predicted: self.class, frame_id, timestamp }
    }
}

/// Binary confusion counts with suitable as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: SubstrateClass, predicted: SubstrateClass) {
        use SubstrateClass::*;
        match (truth, predicted) {
            (Suitable, Suitable) => self.tp += 1,
            (Suitable, Unsuitable) => self.fn_ += 1,
            (Unsuitable, Suitable) => self.fp += 1,
            (Unsuitable, Unsuitable) => self.tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (SubstrateClass, SubstrateClass)>) -> Self {
        let mut cm = Self::default();
        for (t, p) in pairs {
            cm.record(t, p);
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// `None` when the class has no support.
    pub f1_suitable: Option<f64>,
    pub f1_unsuitable: Option<f64>,
}

fn f1(tp: u64, fp: u64, fn_: u64) -> Option<f64> {
    // 2PR / (P + R) simplifies to 2TP / (2TP + FP + FN)
    (tp + fn_ > 0).then(|| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

pub fn confusion_to_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    let total = cm.total();
    ensure(total > 0, || "confusion matrix is empty".into())?;
    Ok(ClassificationMetrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        f1_suitable: f1(cm.tp, cm.fp, cm.fn_),
        f1_unsuitable: f1(cm.tn, cm.fn_, cm.fp),
    })
}
