use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use binsight::data::{
    encode_corpus, load_manifest, obfuscate, split_dataset, synth_corpus, EncodeOptions,
    EncodingMode, Obfuscation, SplitSpec, TrainConfig, DEFAULT_CLASSES,
};
use binsight::encoder::{bytes_to_entropy_image, bytes_to_gray, RawBinary};
use binsight::metrics::{
    accuracy, accuracy_vs_trainsize, confusion, macro_summary, report_csv, report_text,
    scores_from_confusion,
};
use binsight::model::{build_model, load_model, save_model, ModelConfig};
use binsight::train::train;
use binsight_gateway::{serve, Classifier, GatewayConfig};

#[derive(Parser)]
#[command(name = "binsight", version, about = "Binary classification gateway toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a binary file as a PNG image
    Encode {
        /// gray or entropy
        #[arg(long, default_value = "gray")]
        mode: String,
        #[arg(long, default_value_t = 64)]
        side: usize,
        /// Entropy window in bytes
        #[arg(long, default_value_t = 64)]
        window: usize,
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate a synthetic three-class corpus
    Synth {
        /// Files per class
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Apply a byte-level obfuscation transform
    Obfuscate {
        /// xor or permute
        #[arg(long)]
        mode: String,
        /// XOR key byte (decimal or 0x-prefixed hex)
        #[arg(long)]
        key: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a model on a manifest corpus
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "gray")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Evaluate a model on a manifest corpus
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write the per-class report as CSV to this path
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the model's layer summary
    Summary {
        #[arg(long)]
        model: PathBuf,
    },
    /// Classify files and print one verdict line each
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run the gateway service
    Serve {
        #[arg(long)]
        model: PathBuf,
        /// gray or entropy; defaults to the model's input encoding
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        watch: Option<PathBuf>,
        /// ADDR:PORT for the wire protocol
        #[arg(long)]
        listen: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 16 * 1024 * 1024)]
        max_bytes: usize,
    },
    /// Accuracy vs training-set size sweep
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated training fractions
        #[arg(long, default_value = "0.1,0.3,0.5,0.7")]
        fractions: String,
        /// Comma-separated encoding modes
        #[arg(long, default_value = "gray,entropy")]
        modes: String,
        /// Comma-separated seeds
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Encode {
            mode,
            side,
            window,
            file,
            output,
        } => {
            let bytes = std::fs::read(&file).with_context(|| file.display().to_string())?;
            let bin = RawBinary::new(bytes, file.display().to_string())?;
            match EncodingMode::parse(&mode)? {
                EncodingMode::Gray => bytes_to_gray(&bin, side)?.save_png(&output)?,
                EncodingMode::Entropy => {
                    bytes_to_entropy_image(&bin, side, window)?.save_png(&output)?
                }
            }
            println!("wrote {}", output.display());
        }
        Command::Synth { n, seed, out } => {
            let manifest = synth_corpus(n, seed, &out)?;
            println!("wrote {} ({} files)", manifest.display(), 3 * n);
        }
        Command::Obfuscate {
            mode,
            key,
            seed,
            file,
            output,
        } => {
            let transform = match mode.as_str() {
                "xor" => {
                    let key = key.context("--key is required for xor")?;
                    let key = parse_byte(&key)?;
                    Obfuscation::Xor { key }
                }
                "permute" => Obfuscation::Permute { seed },
                other => bail!("unknown obfuscation mode {other:?}"),
            };
            let bytes = std::fs::read(&file).with_context(|| file.display().to_string())?;
            std::fs::write(&output, obfuscate(&bytes, transform)?)?;
            println!("wrote {}", output.display());
        }
        Command::Train {
            manifest,
            mode,
            seed,
            epochs,
            batch,
            train_fraction,
            output,
        } => {
            let mode = EncodingMode::parse(&mode)?;
            let entries = load_manifest(&manifest, &DEFAULT_CLASSES)?;
            let ds = encode_corpus(&entries, mode, &EncodeOptions::default())?;
            let (train_set, val_set) = split_dataset(
                &ds,
                SplitSpec {
                    train_fraction,
                    seed,
                },
            )?;
            let config = ModelConfig {
                channels: mode.channels(),
                seed: seed as u32,
                ..ModelConfig::default()
            };
            let mut model = build_model::<f32>(&config)?;
            let history = train(
                &mut model,
                &train_set,
                Some(&val_set),
                &TrainConfig {
                    batch_size: batch,
                    epochs,
                    seed,
                },
            )?;
            for (i, e) in history.epochs.iter().enumerate() {
                println!(
                    "epoch {}: loss {:.4} accuracy {:.4} val_accuracy {:.4} ({} ms)",
                    i + 1,
                    e.train_loss,
                    e.train_accuracy,
                    e.val_accuracy.unwrap_or(f64::NAN),
                    e.wall_ms
                );
            }
            save_model(&model, &output)?;
            println!("wrote {}", output.display());
        }
        Command::Eval {
            model,
            manifest,
            csv,
        } => {
            let model = load_model(&model)?;
            let mode = if model.config.channels == 3 {
                EncodingMode::Entropy
            } else {
                EncodingMode::Gray
            };
            let entries = load_manifest(&manifest, &DEFAULT_CLASSES)?;
            let ds = encode_corpus(&entries, mode, &EncodeOptions::default())?;
            let matrix = confusion(&model, &ds)?;
            let scores = scores_from_confusion(&matrix);
            print!("{}", report_text(&scores));
            let (_, _, f1) = macro_summary(&scores)?;
            println!("accuracy: {:.6}  overall F1: {f1:.6}", accuracy(&matrix)?);
            if let Some(path) = csv {
                std::fs::write(&path, report_csv(&scores))?;
                println!("wrote {}", path.display());
            }
        }
        Command::Summary { model } => {
            let model = load_model(&model)?;
            print!("{}", model.summary());
        }
        Command::Classify {
            model,
            threshold,
            files,
        } => {
            let classifier = Classifier::load(&model, None, threshold)?;
            for (i, file) in files.iter().enumerate() {
                let verdict = match std::fs::read(file) {
                    Ok(bytes) => {
                        classifier.classify_bytes(i as u64 + 1, &file.display().to_string(), &bytes)
                    }
                    Err(e) => binsight_gateway::Verdict::error(
                        i as u64 + 1,
                        &file.display().to_string(),
                        &e.to_string(),
                    ),
                };
                println!("{}", verdict.to_line());
            }
        }
        Command::Serve {
            model,
            mode,
            watch,
            listen,
            threshold,
            workers,
            log,
            max_bytes,
        } => {
            let mode = mode.as_deref().map(EncodingMode::parse).transpose()?;
            let config = GatewayConfig {
                mode,
                watch_dir: watch,
                listen,
                threshold,
                workers,
                max_bytes,
                ..GatewayConfig::new(model, log)
            };
            let gateway = serve(config)?;
            if let Some(addr) = gateway.local_addr {
                println!("listening on {addr}");
            }
            println!("gateway running; press Ctrl-C to stop");
            loop {
                std::thread::park();
            }
        }
        Command::Sweep {
            manifest,
            fractions,
            modes,
            seeds,
            epochs,
            batch,
        } => {
            let entries = load_manifest(&manifest, &DEFAULT_CLASSES)?;
            let fractions: Vec<f64> = parse_list(&fractions)?;
            let seeds: Vec<u64> = parse_list(&seeds)?;
            let modes: Vec<EncodingMode> = modes
                .split(',')
                .map(|m| EncodingMode::parse(m.trim()))
                .collect::<Result<_, _>>()?;
            let rows = accuracy_vs_trainsize(
                &entries,
                &fractions,
                &modes,
                &seeds,
                &TrainConfig {
                    batch_size: batch,
                    epochs,
                    seed: seeds[0],
                },
            )?;
            println!("{:<10}{:<10}{}", "fraction", "mode", "mean_accuracy");
            for row in rows {
                println!(
                    "{:<10.2}{:<10}{:.4}",
                    row.fraction,
                    row.mode.name(),
                    row.mean_accuracy
                );
            }
        }
    }
    Ok(())
}

fn parse_byte(s: &str) -> anyhow::Result<u8> {
    let v = if let Some(hex) = s.strip_prefix("0x") {
        u8::from_str_radix(hex, 16)?
    } else {
        s.parse()?
    };
    Ok(v)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(Into::into))
        .collect()
}
