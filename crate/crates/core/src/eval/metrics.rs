use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::controller::EpisodeTrace;
use crate::expert::{DatasetRecord, Split};
use crate::tasks::{evaluate_goal_conditions, TaskType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode_id: String,
    pub split: Split,
    pub task_type: TaskType,
    pub success: bool,
    /// Expert path length L.
    pub expert_length: usize,
    /// Agent path length P.
    pub agent_length: usize,
    pub plwsr: f64,
    pub gc_satisfied: usize,
    pub gc_total: usize,
}

/// `success * L / max(P, L)`.
pub fn path_weighted_success(success: bool, expert_length: usize, agent_length: usize) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = expert_length.max(agent_length);
    if denom == 0 {
        1.0
    } else {
        expert_length as f64 / denom as f64
    }
}

pub fn compute_episode_metrics(trace: &EpisodeTrace, record: &DatasetRecord) -> Result<MetricsRecord, EvalError> {
    if trace.episode_id != record.id {
        return Err(EvalError::Mismatch { trace: trace.episode_id.clone(), record: record.id.clone() });
    }
    let task = &record.trajectory.task;
    let gc = evaluate_goal_conditions(&trace.final_scene, task);
    let l = record.trajectory.path_length;
    Ok(MetricsRecord {
        episode_id: record.id.clone(),
        split: record.split,
        task_type: task.task_type,
        success: gc.success,
        expert_length: l,
        agent_length: trace.path_length,
        plwsr: path_weighted_success(gc.success, l, trace.path_length),
        gc_satisfied: gc.satisfied,
        gc_total: gc.total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Split,
    TaskType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub split: Option<Split>,
    pub task_type: Option<TaskType>,
    pub episodes: usize,
    pub successes: usize,
    pub sr: f64,
    pub plwsr: f64,
    /// Condition-weighted: satisfied conditions over all conditions.
    pub gc: f64,
    /// Mean agent path length over successful episodes.
    pub success_length: Option<f64>,
    pub warning: Option<String>,
}

impl AggregateRow {
    pub fn label(&self) -> String {
        let s = self.split.map_or("all", |s| s.name());
        match self.task_type {
            Some(t) => format!("{s}/{t}"),
            None => s.to_string(),
        }
    }

    fn from_records(split: Option<Split>, task_type: Option<TaskType>, recs: &[&MetricsRecord]) -> Self {
        if recs.is_empty() {
            return AggregateRow {
                split,
                task_type,
                episodes: 0,
                successes: 0,
                sr: 0.0,
                plwsr: 0.0,
                gc: 0.0,
                success_length: None,
                warning: Some("no episodes in group; omitted".into()),
            };
        }
        let n = recs.len() as f64;
        let successes = recs.iter().filter(|r| r.success).count();
        let total: usize = recs.iter().map(|r| r.gc_total).sum();
        let sat: usize = recs.iter().map(|r| r.gc_satisfied).sum();
        let lens: Vec<f64> = recs.iter().filter(|r| r.success).map(|r| r.agent_length as f64).collect();
        AggregateRow {
            split,
            task_type,
            episodes: recs.len(),
            successes,
            sr: successes as f64 / n,
            plwsr: recs.iter().map(|r| r.plwsr).sum::<f64>() / n,
            gc: if total == 0 { 0.0 } else { sat as f64 / total as f64 },
            success_length: (!lens.is_empty()).then(|| lens.iter().sum::<f64>() / lens.len() as f64),
            warning: None,
        }
    }
}

/// Overall row first, then one row per group in enum order.
pub fn aggregate(records: &[MetricsRecord], keys: &[GroupKey]) -> Result<Vec<AggregateRow>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let all: Vec<&MetricsRecord> = records.iter().collect();
    let mut rows = vec![AggregateRow::from_records(None, None, &all)];
    let by_split = keys.contains(&GroupKey::Split);
    let by_type = keys.contains(&GroupKey::TaskType);
    let splits: Vec<Option<Split>> = if by_split {
        Split::ALL.iter().copied().filter(|s| records.iter().any(|r| r.split == *s)).map(Some).collect()
    } else {
        vec![None]
    };
    let types: Vec<Option<TaskType>> = if by_type { TaskType::ALL.iter().copied().map(Some).collect() } else { vec![None] };
    if !by_split && !by_type {
        return Ok(rows);
    }
    for &s in &splits {
        if by_split && by_type {
            let group: Vec<&MetricsRecord> = records.iter().filter(|r| Some(r.split) == s).collect();
            rows.push(AggregateRow::from_records(s, None, &group));
        }
        for &t in &types {
            let group: Vec<&MetricsRecord> = records
                .iter()
                .filter(|r| s.is_none_or(|s| r.split == s) && t.is_none_or(|t| r.task_type == t))
                .collect();
            let row = AggregateRow::from_records(s, t, &group);
            if let Some(w) = &row.warning {
                log::warn!("{}: {w}", row.label());
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[AggregateRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "episodes", "successes", "sr", "plwsr", "gc", "success_length", "warning"])
        .expect("in-memory writer");
    for r in rows {
        w.write_record([
            r.label(),
            r.episodes.to_string(),
            r.successes.to_string(),
            format!("{:.4}", r.sr),
            format!("{:.4}", r.plwsr),
            format!("{:.4}", r.gc),
            r.success_length.map(|l| format!("{l:.2}")).unwrap_or_default(),
            r.warning.clone().unwrap_or_default(),
        ])
        .expect("in-memory writer");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: usize, split: Split, t: TaskType, success: bool, l: usize, p: usize, sat: usize, total: usize) -> MetricsRecord {
        MetricsRecord {
            episode_id: format!("e{id}"),
            split,
            task_type: t,
            success,
            expert_length: l,
            agent_length: p,
            plwsr: path_weighted_success(success, l, p),
            gc_satisfied: sat,
            gc_total: total,
        }
    }

    #[test]
    fn formula_cases() {
        assert_eq!(path_weighted_success(true, 10, 10), 1.0);
        assert_eq!(path_weighted_success(true, 10, 20), 0.5);
        assert_eq!(path_weighted_success(true, 10, 5), 1.0);
        assert_eq!(path_weighted_success(false, 10, 10), 0.0);
    }

    #[test]
    fn mixed_pair_halves_everything() {
        let recs = [
            rec(0, Split::ValidSeen, TaskType::Examine, true, 8, 8, 2, 2),
            rec(1, Split::ValidSeen, TaskType::Examine, false, 8, 30, 1, 2),
        ];
        let rows = aggregate(&recs, &[]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sr, 0.5);
        assert_eq!(rows[0].plwsr, 0.5);
        assert_eq!(rows[0].gc, 0.75);
        assert_eq!(rows[0].success_length, Some(8.0));
    }

    #[test]
    fn empty_groups_carry_a_warning() {
        let recs = [rec(0, Split::ValidUnseen, TaskType::Examine, true, 8, 8, 1, 1)];
        let rows = aggregate(&recs, &[GroupKey::TaskType]).unwrap();
        assert_eq!(rows.len(), 1 + TaskType::ALL.len());
        assert_eq!(rows.iter().filter(|r| r.warning.is_some()).count(), TaskType::ALL.len() - 1);
        assert_eq!(aggregate(&[], &[]), Err(EvalError::NoRecords));
    }

    fn arb_record() -> impl Strategy<Value = MetricsRecord> {
        (0..3usize, 0..7usize, any::<bool>(), 1..60usize, 0..200usize, 1..4usize, 0..4usize).prop_map(
            |(s, t, success, l, p, total, sat)| {
                let sat = if success { total } else { sat.min(total) };
                rec(0, Split::ALL[s], TaskType::ALL[t], success, l, p, sat, total)
            },
        )
    }

    proptest! {
        #[test]
        fn plwsr_never_exceeds_success(success: bool, l in 0..500usize, p in 0..500usize) {
            let v = path_weighted_success(success, l, p);
            prop_assert!((0.0..=1.0).contains(&v));
            let cap = if success { 1.0 } else { 0.0 };
            prop_assert!(v <= cap);
        }

        #[test]
        fn aggregation_matches_recomputation(recs in proptest::collection::vec(arb_record(), 1..60)) {
            let rows = aggregate(&recs, &[GroupKey::Split, GroupKey::TaskType]).unwrap();
            for row in rows.iter().filter(|r| r.episodes > 0) {
                let group: Vec<&MetricsRecord> = recs
                    .iter()
                    .filter(|r| row.split.map_or(true, |s| r.split == s) && row.task_type.map_or(true, |t| r.task_type == t))
                    .collect();
                let n = group.len();
                prop_assert_eq!(n, row.episodes);
                let sr = group.iter().filter(|r| r.success).count() as f64 / n as f64;
                let pl = group.iter().map(|r| if r.success { r.expert_length as f64 / r.expert_length.max(r.agent_length) as f64 } else { 0.0 }).sum::<f64>() / n as f64;
                let gc = group.iter().map(|r| r.gc_satisfied).sum::<usize>() as f64 / group.iter().map(|r| r.gc_total).sum::<usize>() as f64;
                prop_assert!((row.sr - sr).abs() < 1e-12);
                prop_assert!((row.plwsr - pl).abs() < 1e-12);
                prop_assert!((row.gc - gc).abs() < 1e-12);
                prop_assert!(row.plwsr <= row.sr + 1e-12);
            }
        }

        #[test]
        fn gc_bounds_sr_when_condition_counts_match(recs in proptest::collection::vec(arb_record(), 1..60), total in 1..4usize) {
            let recs: Vec<MetricsRecord> = recs
                .into_iter()
                .map(|mut r| {
                    r.gc_total = total;
                    r.gc_satisfied = if r.success { total } else { r.gc_satisfied.min(total) };
                    r
                })
                .collect();
            let row = &aggregate(&recs, &[]).unwrap()[0];
            prop_assert!(row.gc + 1e-12 >= row.sr);
        }

        #[test]
        fn aggregation_ignores_record_order(mut recs in proptest::collection::vec(arb_record(), 1..40), seed: u64) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let before = aggregate(&recs, &[GroupKey::Split, GroupKey::TaskType]).unwrap();
            recs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let after = aggregate(&recs, &[GroupKey::Split, GroupKey::TaskType]).unwrap();
            prop_assert_eq!(before.len(), after.len());
            for (a, b) in before.iter().zip(&after) {
                prop_assert_eq!(a.episodes, b.episodes);
                prop_assert!((a.sr - b.sr).abs() < 1e-12 && (a.plwsr - b.plwsr).abs() < 1e-12 && (a.gc - b.gc).abs() < 1e-12);
            }
        }
    }
}
