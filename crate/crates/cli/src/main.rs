use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graformer::config::RunConfig;
use graformer::data::{build_tokenizer, dataset_stats, dump_attention_bias, read_jsonl, split_by_graph_property, GraphProperty};
use graformer::metrics::{corpus_bleu, corpus_chrf, transpose_references};
use graformer::pipeline::{train_from_dir, Bundle};
use graformer::{Error, Result};

#[derive(Parser)]
#[command(name = "graformer", version, about = "Graph-to-text generation with relative graph position attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on <data>/train.jsonl, selecting the epoch with the best val.jsonl BLEU.
    Train(TrainArgs),
    /// Decode one text per input record.
    Generate(GenerateArgs),
    /// Corpus BLEU and chrF++ of a hypothesis file against reference files.
    Score(ScoreArgs),
    /// Inspect a checkpoint: dump the graph attention bias or score test-set splits.
    Analyze(AnalyzeArgs),
    /// Dataset statistics of a JSONL file.
    Stats(StatsArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Directory for checkpoints and the training log.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Beam size; defaults to the value stored in the checkpoint.
    #[arg(long)]
    beams: Option<usize>,
    /// Length penalty exponent; defaults to the value stored in the checkpoint.
    #[arg(long)]
    length_penalty: Option<f64>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Write texts here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// One hypothesis per line.
    #[arg(long)]
    hyp: PathBuf,
    /// One or more reference files, line-aligned with the hypotheses.
    #[arg(long = "ref", required = true, num_args = 1..)]
    refs: Vec<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Print the graph attention bias table as CSV.
    #[arg(long)]
    dump_gamma: bool,
    /// Keep same-entity offset rows in the bias dump.
    #[arg(long, requires = "dump_gamma")]
    include_same: bool,
    /// Test records to split by a graph property and score per bin.
    #[arg(long, requires = "split_by")]
    input: Option<PathBuf>,
    /// avg-component-size or largest-diameter.
    #[arg(long, requires = "input")]
    split_by: Option<GraphProperty>,
    /// Ascending bin thresholds, comma separated.
    #[arg(long, value_delimiter = ',', requires = "split_by")]
    thresholds: Vec<f64>,
    #[arg(long)]
    beams: Option<usize>,
    #[arg(long)]
    length_penalty: Option<f64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Run configuration whose data section sets the preprocessing options.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    let summary = train_from_dir(&config, &args.data, &args.out, |line| println!("{line}"))?;
    println!(
        "best epoch {} saved to {}",
        summary.best_epoch,
        summary.best_checkpoint.display()
    );
    Ok(())
}

fn decode_config(bundle: &Bundle, beams: Option<usize>, length_penalty: Option<f64>) -> graformer::decode::DecodeConfig {
    let mut cfg = bundle.decode;
    if let Some(b) = beams {
        cfg.beams = b;
    }
    if let Some(a) = length_penalty {
        cfg.length_penalty = a;
    }
    cfg
}

fn generate(args: GenerateArgs) -> Result<()> {
    let (bundle, _) = Bundle::load(&args.checkpoint)?;
    let mut cfg = decode_config(&bundle, args.beams, args.length_penalty);
    if let Some(n) = args.min_len {
        cfg.min_len = n;
    }
    if let Some(n) = args.max_len {
        cfg.max_len = n;
    }
    let records = read_jsonl(&args.input)?;
    let texts = bundle.generate(&records, &cfg)?;
    let mut out = String::new();
    for t in texts {
        out.push_str(&t);
        out.push('\n');
    }
    emit(args.output.as_deref(), &out)
}

fn score(args: ScoreArgs) -> Result<()> {
    let hyps = read_lines(&args.hyp)?;
    let files = args.refs.iter().map(|p| read_lines(p)).collect::<Result<Vec<_>>>()?;
    let refs = transpose_references(&files)?;
    println!("BLEU {:.4}", corpus_bleu(&hyps, &refs)?);
    println!("chrF++ {:.4}", corpus_chrf(&hyps, &refs)?);
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let (bundle, _) = Bundle::load(&args.checkpoint)?;
    let mut did = false;
    if args.dump_gamma {
        print!("{}", dump_attention_bias(&bundle.model, args.include_same)?.to_csv());
        did = true;
    }
    if let (Some(input), Some(property)) = (&args.input, args.split_by) {
        let records = read_jsonl(input)?;
        let cfg = decode_config(&bundle, args.beams, args.length_penalty);
        let opts = bundle.ingest;
        println!("bin,instances,bleu,chrf");
        for bin in split_by_graph_property(&records, property, &args.thresholds)? {
            if bin.members.is_empty() {
                println!("{},0,nan,nan", bin.label);
                continue;
            }
            let subset: Vec<_> = bin.members.iter().map(|&i| records[i].clone()).collect();
            let hyps = bundle.generate(&subset, &cfg)?;
            let refs: Vec<Vec<String>> = subset.iter().map(|r| vec![opts.text(&r.text)]).collect();
            println!(
                "{},{},{:.4},{:.4}",
                bin.label,
                subset.len(),
                corpus_bleu(&hyps, &refs)?,
                corpus_chrf(&hyps, &refs)?
            );
        }
        did = true;
    }
    if !did {
        return Err(Error::Contract("nothing to do: pass --dump-gamma or --input with --split-by".into()));
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let options = match &args.config {
        Some(p) => RunConfig::load(p)?.data.ingest(),
        None => RunConfig::webnlg().data.ingest(),
    };
    let records = read_jsonl(&args.input)?;
    let tokenizer = build_tokenizer(&records, &options, None);
    print!("{}", dataset_stats(&records, &tokenizer, &options)?.report());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Score(a) => score(a),
        Command::Analyze(a) => analyze(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
