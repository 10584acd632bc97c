//! Runs an ablation preset on the reference synthetic corpus and prints the table.
//!
//! ```text
//! cargo run --release -p twotower-core --example reference_ablation -- [preset] [key=value ...]
//! ```
//!
//! Keys: seed, epochs, batch_size, learning_rate, d_id, d_out, init_scale,
//! threshold, d_text, d_visual, n_pairs, k.

use twotower_core::{generate_corpus, run_ablation, AblationSpec, EvalConfig, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1).peekable();
    let preset = match args.peek() {
        Some(a) if !a.contains('=') => args.next().unwrap(),
        _ => "full".to_string(),
    };
    let mut spec = AblationSpec::preset(&preset)?;
    let mut synth = SynthConfig::reference();
    let mut eval = EvalConfig::default();
    let mut seed = 7;
    for arg in args {
        let (key, value) = arg.split_once('=').ok_or("expected key=value")?;
        match key {
            "seed" => seed = value.parse()?,
            "epochs" => spec.train.epochs = value.parse()?,
            "batch_size" => spec.train.batch_size = value.parse()?,
            "learning_rate" => spec.train.learning_rate = value.parse()?,
            "threshold" => spec.train.sem_config.cosine_threshold = value.parse()?,
            "d_id" => spec.model.d_id = value.parse()?,
            "d_out" => spec.model.d_out = value.parse()?,
            "init_scale" => spec.model.init_scale = value.parse()?,
            "d_text" => synth.d_text = value.parse()?,
            "d_visual" => synth.d_visual = value.parse()?,
            "n_pairs" => synth.n_pairs = value.parse()?,
            "k" => eval.k = value.parse()?,
            other => return Err(format!("unknown key {other}").into()),
        }
    }
    let started = std::time::Instant::now();
    let dataset = generate_corpus(&synth)?;
    let report = run_ablation(&dataset, &spec, &eval, seed)?;
    print!("{}", report.to_table());
    eprintln!("{:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
