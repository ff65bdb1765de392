//! Sweeps the additive length reward and reports how the mean
//! hypothesis/reference length ratio responds per decoding mode: grid
//! coupling resists inflation that a pure attention beam indulges.
//! Run with --release.

use ctcattn::decode::{decode_instance, DecodeConfig, DecodeMode};
use ctcattn::model::{Model, ModelConfig, TaskKind};
use ctcattn::train::{gen_corpus, train, SyntheticTaskSpec, TaskName, TrainConfig};

fn main() {
    let spec = SyntheticTaskSpec {
        task: TaskName::Reverse,
        src_vocab: 6,
        tgt_vocab: 6,
        min_len: 4,
        max_len: 8,
        n_train: 300,
        n_valid: 30,
        n_test: 12,
        seed: 21,
        ..SyntheticTaskSpec::default()
    };
    let (train_set, valid_set, test_set) = gen_corpus(&spec).unwrap();
    let mut config = ModelConfig::desk_default(TaskKind::Mt, 6, 6);
    config.d_model = 64;
    config.n_heads = 2;
    config.n_src_layers = 1;
    config.n_adjust_layers = 1;
    config.n_tgt_layers = 2;
    config.n_dec_layers = 1;
    config.dropout = 0.1;
    let mut model = Model::new(config, 21).unwrap();
    let cfg = TrainConfig {
        epochs: 6,
        warmup_steps: 200,
        seed: 21,
        log_every: 1_000_000,
        ..TrainConfig::default()
    };
    train(&mut model, &train_set, &valid_set, &cfg).unwrap();

    print!("{:<14}", "penalty");
    for i in 0..=5 {
        print!(" {:>5.1}", i as f64 * 0.2);
    }
    println!();
    for mode in [DecodeMode::AttnOnly, DecodeMode::JointOsync, DecodeMode::JointIsync] {
        print!("{:<14}", mode.name());
        for i in 0..=5 {
            let dc = DecodeConfig {
                mode,
                beam_size: 5,
                length_penalty: i as f64 * 0.2,
                max_len_ratio: 3.0,
                ..DecodeConfig::default()
            };
            let mut hyp = 0usize;
            let mut refs = 0usize;
            for ex in &test_set {
                let r = decode_instance(&model, &ex.src, &dc).unwrap();
                hyp += r.best().unwrap().tokens.len();
                refs += ex.tgt.ids.len();
            }
            print!(" {:>5.2}", hyp as f64 / refs as f64);
        }
        println!();
    }
}
