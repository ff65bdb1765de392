//! Trains briefly on the reverse task and decodes the same test inputs
//! under every decoding mode. Run with --release.

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
        n_train: 500,
        n_valid: 40,
        n_test: 40,
        seed: 5,
        ..SyntheticTaskSpec::default()
    };
    let (train_set, valid_set, test_set) = gen_corpus(&spec).unwrap();

    let mut config = ModelConfig::desk_default(TaskKind::Mt, 6, 6);
    config.d_model = 48;
    config.n_heads = 2;
    config.n_src_layers = 1;
    config.n_adjust_layers = 1;
    config.n_tgt_layers = 2;
    config.n_dec_layers = 1;
    let mut model = Model::new(config, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        warmup_steps: 200,
        seed: 5,
        log_every: 1_000_000,
        ..TrainConfig::default()
    };
    train(&mut model, &train_set, &valid_set, &cfg).unwrap();

    println!("{:<22} {:>9} {:>10} {:>12}", "mode", "seq acc", "log-adds", "scorer calls");
    for mode in DecodeMode::ALL {
        let dc = DecodeConfig { mode, beam_size: 5, ..DecodeConfig::default() };
        let mut ok = 0usize;
        let mut log_adds = 0u64;
        let mut calls = 0u64;
        for ex in &test_set {
            let r = decode_instance(&model, &ex.src, &dc).unwrap();
            if r.best().map(|h| h.tokens.as_slice()) == Some(ex.tgt.ids.as_slice()) {
                ok += 1;
            }
            log_adds += r.log_adds;
            calls += r.scorer_calls;
        }
        println!(
            "{:<22} {:>9.3} {:>10} {:>12}",
            mode.name(),
            ok as f64 / test_set.len() as f64,
            log_adds,
            calls
        );
    }
}
