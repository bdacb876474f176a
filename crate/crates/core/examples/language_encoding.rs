//! Encodes instructions as bag-of-words vectors and pairs a navigation step with its interaction.

use compose_agent::lang::Vocabulary;

fn main() {
    let vocab = Vocabulary::from_templates();
    println!("vocabulary: {} tokens", vocab.len());
    let steps = vec![
        "turn left and walk to the counter".to_string(),
        "pick up the apple on the counter".to_string(),
    ];
    for (i, s) in steps.iter().enumerate() {
        let enc = vocab.encode(s);
        let words: Vec<&str> = vocab.tokenize(s).into_iter().filter_map(|t| vocab.token(t)).collect();
        println!("step {i}: {} non-zero features, tokens {:?}", enc.counts.iter().filter(|c| **c != 0.0).count(), words);
    }
    let paired = vocab.pair_subtask(&steps, 0).expect("step 0 has a successor");
    let nav = vocab.encode(&steps[0]);
    println!(
        "paired navigation step: {} non-zero features (navigation text alone: {})",
        paired.counts.iter().filter(|c| **c != 0.0).count(),
        nav.counts.iter().filter(|c| **c != 0.0).count()
    );
}
