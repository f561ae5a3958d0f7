use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_rng, CodingTask};
use crate::error::{Error, Result};

/// Seeded balanced partition of tasks into `folds` groups. Sizes differ by
/// at most one; earlier folds take the remainder. Ids inside a fold are
/// sorted.
pub fn split_folds(tasks: &[&CodingTask], folds: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if folds > tasks.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot split {} tasks into {folds} folds",
            tasks.len()
        )));
    }
    let mut ids: Vec<String> = tasks.iter().map(|t| t.task_id.clone()).collect();
    // Sorting first makes the partition independent of input order.
    ids.sort();
    let mut rng: ChaCha8Rng = derive_rng(seed, &["folds"]);
    ids.shuffle(&mut rng);

    let base = ids.len() / folds;
    let extra = ids.len() % folds;
    let mut out = Vec::with_capacity(folds);
    let mut rest = ids.as_slice();
    for i in 0..folds {
        let size = base + usize::from(i < extra);
        let (head, tail) = rest.split_at(size);
        let mut fold = head.to_vec();
        fold.sort();
        out.push(fold);
        rest = tail;
    }
    Ok(out)
}

/// `{fold_index -> [task_id]}` as persisted next to the ingested dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FoldAssignment(pub BTreeMap<usize, Vec<String>>);

impl FoldAssignment {
    pub fn from_folds(folds: Vec<Vec<String>>) -> Self {
        FoldAssignment(folds.into_iter().enumerate().collect())
    }

    pub fn fold_of(&self, task_id: &str) -> Option<usize> {
        self.0
            .iter()
            .find(|(_, ids)| ids.iter().any(|id| id == task_id))
            .map(|(i, _)| *i)
    }

    pub fn tasks_in(&self, fold: usize) -> &[String] {
        self.0.get(&fold).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CompletionSite;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn tasks(n: usize) -> Vec<CodingTask> {
        (0..n)
            .map(|i| CodingTask {
                task_id: format!("task-{i:03}"),
                function_name: "f".into(),
                signature_and_doc: "def f():".into(),
                repo_root: ".".into(),
                test_command: "true".into(),
                interpreter_hint: "python3".into(),
                completion_site: CompletionSite {
                    file: "m.py".into(),
                    start_line: 1,
                    end_line: 1,
                },
                check_command: None,
                reference_solution: None,
            })
            .collect()
    }

    #[test]
    fn hundred_tasks_five_folds() {
        let ts = tasks(100);
        let refs: Vec<_> = ts.iter().collect();
        let folds = split_folds(&refs, 5, 0).unwrap();
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|f| f.len() == 20));
    }

    #[test]
    fn uneven_split() {
        let ts = tasks(7);
        let refs: Vec<_> = ts.iter().collect();
        let sizes: Vec<_> = split_folds(&refs, 2, 1)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, [4, 3]);
    }

    #[test]
    fn deterministic() {
        let ts = tasks(13);
        let refs: Vec<_> = ts.iter().collect();
        assert_eq!(
            split_folds(&refs, 3, 9).unwrap(),
            split_folds(&refs, 3, 9).unwrap()
        );
        let mut reversed = refs.clone();
        reversed.reverse();
        assert_eq!(
            split_folds(&refs, 3, 9).unwrap(),
            split_folds(&reversed, 3, 9).unwrap()
        );
    }

    #[test]
    fn bad_fold_counts() {
        let ts = tasks(3);
        let refs: Vec<_> = ts.iter().collect();
        assert!(matches!(
            split_folds(&refs, 4, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            split_folds(&refs, 1, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn assignment_json_shape() {
        let a = FoldAssignment::from_folds(vec![vec!["a".into()], vec!["b".into()]]);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            r#"{"0":["a"],"1":["b"]}"#
        );
        assert_eq!(a.fold_of("b"), Some(1));
    }

    proptest! {
        #[test]
        fn partition_properties(n in 2usize..60, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let ts = tasks(n);
            let refs: Vec<_> = ts.iter().collect();
            let folds = split_folds(&refs, k, seed).unwrap();
            let sizes: Vec<_> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let all: Vec<_> = folds.iter().flatten().cloned().collect();
            let set: HashSet<_> = all.iter().cloned().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(set.len(), n);
        }
    }
}
