use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::world::{ObjectClass, Observation};

/// Detector error rates for the navigation subgoal monitor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorNoise {
    pub false_negative: f64,
    pub false_positive: f64,
}

/// Whether the target class is in reach, as reported by a possibly noisy detector.
pub fn subgoal_monitor_check<R: Rng>(obs: &Observation, target: ObjectClass, noise: &MonitorNoise, rng: &mut R) -> bool {
    if obs.interactable(target) {
        noise.false_negative <= 0.0 || !rng.gen_bool(noise.false_negative.min(1.0))
    } else {
        noise.false_positive > 0.0 && rng.gen_bool(noise.false_positive.min(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ViewFeature, VisibleObject};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs_with_mug(distance: u8) -> Observation {
        let mug = VisibleObject {
            id: 1,
            class: ObjectClass::Mug,
            distance,
            offset: 0,
            interactable: distance <= 1,
            state_bits: 0,
        };
        let mut views = vec![ViewFeature::default(); 5];
        views[0].visible.push(mug);
        Observation { views, fingerprint: 0, held: None }
    }

    #[test]
    fn oracle_detector() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clean = MonitorNoise::default();
        assert!(subgoal_monitor_check(&obs_with_mug(1), ObjectClass::Mug, &clean, &mut rng));
        assert!(!subgoal_monitor_check(&obs_with_mug(3), ObjectClass::Mug, &clean, &mut rng));
        assert!(!subgoal_monitor_check(&obs_with_mug(1), ObjectClass::Apple, &clean, &mut rng));
    }

    #[test]
    fn certain_false_negatives_never_fire() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let blind = MonitorNoise { false_negative: 1.0, false_positive: 0.0 };
        assert!((0..100).all(|_| !subgoal_monitor_check(&obs_with_mug(1), ObjectClass::Mug, &blind, &mut rng)));
    }
}
