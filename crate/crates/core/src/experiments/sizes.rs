use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::Architecture;
use crate::envs::EnvFamily;
use crate::error::{Error, Result};

/// Hidden layers of every teacher.
pub const TEACHER_HIDDEN: [usize; 2] = [64, 64];

/// Student network size relative to the teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeVariant {
    Smaller,
    Same,
    Larger,
}

impl SizeVariant {
    pub const ALL: [SizeVariant; 3] = [SizeVariant::Smaller, SizeVariant::Same, SizeVariant::Larger];

    pub fn name(&self) -> &'static str {
        match self {
            SizeVariant::Smaller => "smaller",
            SizeVariant::Same => "same",
            SizeVariant::Larger => "larger",
        }
    }

    /// Allowed student/teacher parameter-count ratio.
    pub fn ratio_window(&self) -> (f64, f64) {
        match self {
            SizeVariant::Smaller => (0.2, 0.3),
            SizeVariant::Same => (1.0, 1.0),
            SizeVariant::Larger => (3.0, 8.0),
        }
    }

    /// Hidden sizes of this variant for the standard teacher.
    pub fn hidden(&self, family: EnvFamily) -> Vec<usize> {
        match (self, family) {
            (SizeVariant::Smaller, _) => vec![32, 24],
            (SizeVariant::Same, _) => TEACHER_HIDDEN.to_vec(),
            // 192 units would put the low-dimensional point mass just above 8x
            (SizeVariant::Larger, EnvFamily::PointMass) => vec![160, 160],
            (SizeVariant::Larger, _) => vec![192, 192],
        }
    }

    /// Hidden sizes relative to a teacher with hidden layers
    /// `teacher_hidden`, checked against [`Self::ratio_window`].
    pub fn realize(&self, family: EnvFamily, teacher_hidden: &[usize]) -> Result<Vec<usize>> {
        let hidden = match self {
            SizeVariant::Same => teacher_hidden.to_vec(),
            _ if teacher_hidden == TEACHER_HIDDEN => self.hidden(family),
            SizeVariant::Smaller => teacher_hidden.iter().map(|h| (h / 2).max(1)).collect(),
            SizeVariant::Larger => teacher_hidden.iter().map(|h| h * 5 / 2).collect(),
        };
        let ratio = param_ratio(family, &hidden, teacher_hidden);
        let (lo, hi) = self.ratio_window();
        if ratio < lo || ratio > hi {
            return Err(Error::Config(format!(
                "{} student {hidden:?} has {ratio:.3}x the parameters of teacher {teacher_hidden:?}, outside [{lo}, {hi}]",
                self.name()
            )));
        }
        Ok(hidden)
    }
}

/// Student/teacher ratio of total parameter counts (policy, log-std, value).
pub fn param_ratio(family: EnvFamily, student_hidden: &[usize], teacher_hidden: &[usize]) -> f64 {
    Architecture::for_env(family, student_hidden).param_count() as f64
        / Architecture::for_env(family, teacher_hidden).param_count() as f64
}

impl fmt::Display for SizeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SizeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smaller" => Ok(SizeVariant::Smaller),
            "same" => Ok(SizeVariant::Same),
            "larger" => Ok(SizeVariant::Larger),
            _ => Err(Error::Config(format!("unknown size variant {s:?}"))),
        }
    }
}
