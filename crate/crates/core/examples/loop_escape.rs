//! Shows the loop detector firing on a period-2 fingerprint cycle.

use compose_agent::policies::{detect_deadlock, escape_action, ObservationHistory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let window = 5;
    let mut history = ObservationHistory::new(window, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (t, fp) in [10u64, 11, 12, 13, 12, 13, 12, 13, 12, 13].into_iter().enumerate() {
        history.push(fp);
        let fired = detect_deadlock(history.as_slice(), window);
        let note = if fired { format!("loop detected, escaping with {:?}", escape_action(&mut rng)) } else { String::new() };
        println!("t={t:<2} fingerprint {fp}  {note}");
    }
}
