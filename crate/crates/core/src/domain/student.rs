use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_rng, KnowledgeSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentLevel {
    Low,
    Medium,
    High,
}

impl StudentLevel {
    pub const ALL: [StudentLevel; 3] =
        [StudentLevel::Low, StudentLevel::Medium, StudentLevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            StudentLevel::Low => "low",
            StudentLevel::Medium => "medium",
            StudentLevel::High => "high",
        }
    }
}

impl fmt::Display for StudentLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudentLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(StudentLevel::Low),
            "medium" | "med" => Ok(StudentLevel::Medium),
            "high" => Ok(StudentLevel::High),
            other => Err(Error::InvalidConfig(format!(
                "unknown student level `{other}`"
            ))),
        }
    }
}

/// What a simulated student knows before tutoring starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub level: StudentLevel,
    pub dependency_ratio: f64,
    pub seed: u64,
    /// kc_ids of the granted dependencies, in dataset order.
    pub granted_dependencies: Vec<String>,
    pub granted_code_contexts: bool,
}

impl StudentProfile {
    pub fn check_consistent(&self, spec: &KnowledgeSpec) -> Result<()> {
        let expected = grant_count(self.dependency_ratio, spec.dependencies.len());
        let ok = match self.level {
            StudentLevel::Low => {
                self.granted_dependencies.is_empty() && !self.granted_code_contexts
            }
            StudentLevel::Medium => {
                self.granted_dependencies.len() == expected && !self.granted_code_contexts
            }
            StudentLevel::High => {
                self.granted_dependencies.len() == expected && self.granted_code_contexts
            }
        };
        let known = self
            .granted_dependencies
            .iter()
            .all(|id| spec.dependencies.iter().any(|kc| &kc.kc_id == id));
        if ok && known {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "profile ({}) inconsistent with knowledge of task {}",
                self.level, spec.task_id
            )))
        }
    }
}

/// Half-up rounding of `ratio * total`.
pub fn grant_count(ratio: f64, total: usize) -> usize {
    let raw = (ratio * total as f64 + 0.5).floor();
    (raw.max(0.0) as usize).min(total)
}

/// Builds the student profile for one (task, level, ratio, seed) cell.
///
/// Medium and high students share the same draw, so a high-level grant is
/// always the medium-level grant plus the code contexts.
pub fn sample_student_knowledge(
    spec: &KnowledgeSpec,
    level: StudentLevel,
    ratio: f64,
    seed: u64,
) -> Result<StudentProfile> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!(
            "dependency ratio {ratio} outside [0, 1]"
        )));
    }
    if spec.dependencies.is_empty() {
        return Err(Error::InvalidSpec(format!(
            "task {}: no reference dependencies",
            spec.task_id
        )));
    }

    let granted_dependencies = match level {
        StudentLevel::Low => Vec::new(),
        StudentLevel::Medium | StudentLevel::High => {
            let mut rng: ChaCha8Rng = derive_rng(seed, &["student-knowledge", &spec.task_id]);
            let total = spec.dependencies.len();
            let mut picked = index::sample(&mut rng, total, grant_count(ratio, total)).into_vec();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|i| spec.dependencies[i].kc_id.clone())
                .collect()
        }
    };

    Ok(StudentProfile {
        level,
        dependency_ratio: ratio,
        seed,
        granted_dependencies,
        granted_code_contexts: level == StudentLevel::High,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DepType, KnowledgeComponent};
    use proptest::prelude::*;

    fn spec_with(deps: usize) -> KnowledgeSpec {
        KnowledgeSpec {
            task_id: "task-a".into(),
            code_contexts: "ctx".into(),
            dependencies: (1..=deps)
                .map(|i| {
                    KnowledgeComponent::dependency(i, format!("pkg.mod.f{i}"), DepType::CrossFile)
                })
                .collect(),
            solution_steps: vec![KnowledgeComponent::solution_step(1, "step")],
        }
    }

    #[test]
    fn low_level_grants_nothing() {
        let p = sample_student_knowledge(&spec_with(4), StudentLevel::Low, 0.9, 7).unwrap();
        assert!(p.granted_dependencies.is_empty());
        assert!(!p.granted_code_contexts);
    }

    #[test]
    fn medium_grants_half() {
        let p = sample_student_knowledge(&spec_with(4), StudentLevel::Medium, 0.5, 7).unwrap();
        assert_eq!(p.granted_dependencies.len(), 2);
        assert!(!p.granted_code_contexts);
    }

    #[test]
    fn high_matches_medium_plus_contexts() {
        let spec = spec_with(4);
        let med = sample_student_knowledge(&spec, StudentLevel::Medium, 0.5, 7).unwrap();
        let high = sample_student_knowledge(&spec, StudentLevel::High, 0.5, 7).unwrap();
        assert_eq!(med.granted_dependencies, high.granted_dependencies);
        assert!(high.granted_code_contexts);
        high.check_consistent(&spec).unwrap();
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(grant_count(0.5, 3), 2);
        assert_eq!(grant_count(0.5, 1), 1);
        assert_eq!(grant_count(0.25, 2), 1);
        assert_eq!(grant_count(0.0, 5), 0);
        assert_eq!(grant_count(1.0, 5), 5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut spec = spec_with(2);
        assert!(matches!(
            sample_student_knowledge(&spec, StudentLevel::Medium, 1.5, 0),
            Err(Error::InvalidConfig(_))
        ));
        spec.dependencies.clear();
        assert!(matches!(
            sample_student_knowledge(&spec, StudentLevel::Low, 0.5, 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    proptest! {
        #[test]
        fn sampling_is_pure_and_nested(deps in 1usize..12, ratio in 0.0f64..=1.0, seed in any::<u64>()) {
            let spec = spec_with(deps);
            let a = sample_student_knowledge(&spec, StudentLevel::Medium, ratio, seed).unwrap();
            let b = sample_student_knowledge(&spec, StudentLevel::Medium, ratio, seed).unwrap();
            let high = sample_student_knowledge(&spec, StudentLevel::High, ratio, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&a.granted_dependencies, &high.granted_dependencies);
            prop_assert_eq!(a.granted_dependencies.len(), grant_count(ratio, deps));
            a.check_consistent(&spec).unwrap();
        }
    }
}
