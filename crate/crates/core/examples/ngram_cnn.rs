//! Trains the opcode n-gram network on a planted-trigram task and shows
//! that the 300-wide pooled layer is what gets exported as features.
//!
//! cargo run --release --example ngram_cnn

use malfam::deepfeat::{build_ngram_cnn, train_cnn, Arch, CnnInput, TrainParams, DEFAULT_OPCODE_CAP};
use malfam::eval::argmax;
use malfam::synth::{planted_trigram_corpus, TRIGRAM_VOCAB};

fn tokens(per_class: usize, seed: u64) -> Vec<(CnnInput, usize)> {
    planted_trigram_corpus(per_class, seed)
        .into_iter()
        .map(|(t, y)| (CnnInput::Tokens(t), y))
        .collect()
}

fn main() -> malfam::Result<()> {
    let train = tokens(20, 40);
    let test = tokens(10, 41);
    let spec = build_ngram_cnn(Arch::OpcodeNgram, TRIGRAM_VOCAB, 3, DEFAULT_OPCODE_CAP)?;
    for (name, dims) in spec.shape_trace() {
        println!("{name:<12} {dims:?}");
    }
    let hp = TrainParams {
        lr: 1e-2,
        batch_size: 8,
        val_fraction: 0.0,
        seed: 4,
        ..TrainParams::default()
    };
    let model = train_cnn(spec, &train, &hp)?;
    for (e, l) in model.meta.train_loss.iter().enumerate().step_by(5) {
        println!("epoch {:>2} loss {l:.4}", e + 1);
    }
    let mut correct = 0;
    for (x, y) in &test {
        correct += usize::from(argmax(&model.predict_proba(x)?) == *y);
    }
    println!("test accuracy {correct}/{}", test.len());
    println!("feature vector length {}", model.features(&test[0].0)?.len());
    Ok(())
}
