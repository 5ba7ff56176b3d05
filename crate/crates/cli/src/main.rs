mod args;
mod error;
mod manifest;
mod run;

use std::fmt::Write as _;
use std::fs;
use std::process::ExitCode;

use clap::Parser;
use deepgs::model::{self, PreparedData};
use deepgs::nn::gradcheck;
use deepgs::{fingerprint, smiles, MetricsReport, Variant};

use args::{AblateArgs, Cli, Command, EvaluateArgs, GradcheckArgs, InspectArgs, PredictArgs, Split, TrainArgs};
use error::CliError;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let t = run::train(&a.data, &a.model, &a.out, a.resume)?;
    let report = run::score(&t.bundle, &t.split.ds, &t.data, &t.split.test)?;
    println!("epochs {} written to {}", t.epochs_completed, a.out.display());
    println!("{report}");
    Ok(())
}

fn report_text(report: &MetricsReport) -> String {
    format!("{}\n{}\n\n{report}", MetricsReport::CSV_HEADER, report.csv_row())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let bundle = run::load_bundle(&a.model)?;
    let s = run::load_split(&a.data)?;
    let indices = match a.split {
        Split::Train => s.train,
        Split::Test => s.test,
        Split::All => (0..s.ds.len()).collect(),
    };
    let data = PreparedData::new(&s.ds, &bundle.featurizer, &indices)?;
    let report = run::score(&bundle, &s.ds, &data, &indices)?;
    println!("{}", report_text(&report));
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let p = out.join("metrics.csv");
        fs::write(&p, format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()))
            .map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let bundle = run::load_bundle(&a.model)?;
    let drug = bundle.featurizer.drug(&a.smiles)?;
    let protein = bundle.featurizer.protein(&a.sequence);
    let y = bundle.model.predict(&drug, &protein)?;
    if !y.is_finite() {
        return Err(CliError::Numeric(format!("prediction is {y}")));
    }
    println!("{y}");
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let mut m = a.model.clone();
        m.variant = Some(v);
        let dir = a.out.join(v.as_str());
        let t = run::train(&a.data, &m, &dir, false)?;
        rows.push((v, run::score(&t.bundle, &t.split.ds, &t.data, &t.split.test)?));
    }
    let mut csv = format!("variant,{}\n", MetricsReport::CSV_HEADER);
    let mut table = format!(
        "{:<10}{:>10}{:>10}{:>10}{:>10}\n",
        "variant", "MSE", "CI", "rm2", "AUPR"
    );
    for (v, r) in &rows {
        let _ = writeln!(csv, "{v},{}", r.csv_row());
        let _ = writeln!(
            table,
            "{:<10}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
            v.as_str(),
            r.mse,
            r.ci,
            r.rm2,
            r.aupr
        );
    }
    let p = a.out.join("ablation.csv");
    fs::write(&p, &csv).map_err(|e| CliError::io(&p, e))?;
    print!("{table}");
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<(), CliError> {
    let data_err = |e: smiles::SmilesError| CliError::Data(format!("invalid SMILES `{}`: {e}", a.smiles));
    let tokens = smiles::tokenize(&a.smiles).map_err(data_err)?;
    let graph = smiles::parse(&a.smiles).map_err(data_err)?;
    println!("tokens {}", tokens.len());
    for t in tokens.iter() {
        println!("{} {:?} {}", t.position, t.kind, t.text);
    }
    print!("{}", graph.dump());
    if let Some(r) = a.radius {
        println!("fingerprints radius {r}");
        for (i, s) in fingerprint::signatures(&graph, r).iter().enumerate() {
            println!("{i} {s}");
        }
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let mut rows: Vec<(String, f64, f64)> = gradcheck::layer_suite(a.seed)
        .map_err(|e| CliError::Numeric(e.to_string()))?
        .into_iter()
        .map(|c| (c.op.to_string(), c.report.max_rel_error, a.tol))
        .collect();
    for v in Variant::ALL {
        let r = model::model_gradcheck(v, a.seed)?;
        rows.push((format!("model:{v}"), r.max_rel_error, a.model_tol));
    }
    println!("{:<18}{:>14}{:>10}  status", "op", "max_rel_error", "tol");
    let mut failed = Vec::new();
    for (op, err, tol) in &rows {
        let pass = *err < *tol;
        if !pass {
            failed.push(op.as_str());
        }
        println!(
            "{op:<18}{err:>14.3e}{tol:>10.0e}  {}",
            if pass { "pass" } else { "FAIL" }
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}
