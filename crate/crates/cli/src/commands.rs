use std::fs;
use std::thread;

use anyhow::{Context, Result};
use mirfs::checks::{run_checks, Tolerances};
use mirfs::model::{box_midpoint, check_admissible};
use mirfs::oracles::FaultyModel;
use mirfs::{ergodic_diagnostics, evaluate_with, fit, simulate, EvalOptions, FitOptions, FitResult, Model};
use serde_json::{json, Value};

use crate::cli::{CheckArgs, DiagnoseArgs, EvalArgs, FitArgs, SimulateArgs};
use crate::io::{
    config_bail, emit, load_model, params_value, parse_theta, path_csv, read_data, require_positive, to_json,
};

pub fn simulate_cmd(args: SimulateArgs) -> Result<u8> {
    require_positive("n", args.n)?;
    let model = load_model(&args.model.model)?;
    let theta = parse_theta(&args.theta, &model)?;
    let path = simulate(&model, &theta, args.n, args.seed)?;
    emit(args.out.as_deref(), &path_csv(&path.states, &path.observations)?)?;
    let summary = format!("simulated n={} states={} seed={}", path.len(), model.n_states(), args.seed);
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(0)
}

pub fn eval_cmd(args: EvalArgs) -> Result<u8> {
    let model = load_model(&args.model.model)?;
    let theta = parse_theta(&args.theta, &model)?;
    let data = read_data(&args.data, model.obs_dim())?;
    let mut opts = EvalOptions::order(args.order as usize);
    if args.increments.is_some() {
        opts = opts.with_increments();
    }
    let report = evaluate_with(&model, &theta, &data, opts)?;
    if let (Some(path), Some(inc)) = (&args.increments, &report.increments) {
        fs::write(path, inc.to_csv(model.param_names()))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    let mut value = serde_json::to_value(&report)?;
    value["theta"] = params_value(&model, &theta);
    emit(args.out.as_deref(), to_json(&value).as_bytes())?;
    Ok(0)
}

fn parse_inits(spec: Option<&str>, model: &mirfs::BuiltinModel) -> Result<Vec<Vec<f64>>> {
    let inits = match spec {
        None => vec![box_midpoint(model)],
        Some(s) => s
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| parse_theta(p.trim(), model))
            .collect::<Result<Vec<_>>>()?,
    };
    if inits.is_empty() {
        config_bail!("--inits holds no starting point");
    }
    for (i, init) in inits.iter().enumerate() {
        if let Err(e) = check_admissible(model, init) {
            config_bail!("start {i}: {e}");
        }
    }
    Ok(inits)
}

pub fn fit_cmd(args: FitArgs) -> Result<u8> {
    if !(args.tol > 0.0) {
        config_bail!("--tol must be positive");
    }
    require_positive("max-iter", args.max_iter)?;
    let model = load_model(&args.model.model)?;
    let data = read_data(&args.data, model.obs_dim())?;
    let inits = parse_inits(args.inits.as_deref(), &model)?;
    let opts = FitOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..Default::default()
    };

    // starts are independent; results are collected in input order
    let results: Vec<mirfs::Result<FitResult>> = thread::scope(|s| {
        let handles: Vec<_> = inits
            .iter()
            .map(|init| s.spawn(|| fit(&model, &data, init, &opts)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("fit thread panicked")).collect()
    });

    let mut starts = Vec::new();
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for (init, res) in inits.iter().zip(results) {
        match res {
            Ok(r) => {
                starts.push(json!({
                    "init": init,
                    "loglik": r.loglik,
                    "converged": r.converged,
                    "iterations": r.iterations,
                }));
                let better = match &best {
                    None => true,
                    Some(b) => (r.converged, r.loglik) > (b.converged, b.loglik),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                starts.push(json!({"init": init, "error": e.to_string()}));
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(best) = best else {
        return Err(first_err.expect("at least one start").into());
    };
    if let Some(path) = &args.trace {
        fs::write(path, best.trace_csv()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let mut value = serde_json::to_value(&best)?;
    value["starts"] = Value::Array(starts);
    emit(args.out.as_deref(), to_json(&value).as_bytes())?;
    if !best.converged {
        eprintln!("warning: fit did not converge: {}", best.reason);
    }
    Ok(0)
}

pub fn check_cmd(args: CheckArgs) -> Result<u8> {
    require_positive("n", args.n)?;
    let model = load_model(&args.model.model)?;
    let theta = match &args.theta {
        Some(s) => parse_theta(s, &model)?,
        None => box_midpoint(&model),
    };
    check_admissible(&model, &theta)?;
    let datasets = match &args.data {
        Some(p) => vec![read_data(p, model.obs_dim())?],
        None => (0..3)
            .map(|i| Ok(simulate(&model, &theta, args.n, args.seed + i)?.observations))
            .collect::<Result<Vec<_>>>()?,
    };
    let order = args.order as usize;
    let tol = Tolerances::default();
    let report = match args.inject_fault {
        Some(delta) => run_checks(&FaultyModel { inner: model, delta }, &theta, &datasets, order, &tol)?,
        None => run_checks(&model, &theta, &datasets, order, &tol)?,
    };

    println!("{:<24} {:>4} {:>6} {:>12} {:>10}  status", "check", "case", "n", "error", "tolerance");
    for row in &report.rows {
        let err = row.error.map_or_else(|| "-".to_string(), |e| format!("{e:.3e}"));
        let status = match (&row.note, row.passed) {
            (Some(note), _) => format!("skipped ({note})"),
            (None, true) => "ok".to_string(),
            (None, false) => "FAIL".to_string(),
        };
        println!(
            "{:<24} {:>4} {:>6} {:>12} {:>10.1e}  {status}",
            row.check, row.case, row.n, err, row.tolerance
        );
    }
    if let Some(out) = &args.out {
        emit(Some(out), to_json(&serde_json::to_value(&report)?).as_bytes())?;
    }
    if report.passed {
        println!("all checks passed");
        Ok(0)
    } else {
        let failed: Vec<String> = report
            .failures()
            .map(|r| format!("{} (case {})", r.check, r.case))
            .collect();
        eprintln!("failed: {}", failed.join(", "));
        Ok(1)
    }
}

pub fn diagnose_cmd(args: DiagnoseArgs) -> Result<u8> {
    let model = load_model(&args.model.model)?;
    let theta = parse_theta(&args.theta, &model)?;
    let mut grid = Vec::new();
    for part in args.grid.split(',') {
        match part.trim().parse::<usize>() {
            Ok(n) if n > 0 => grid.push(n),
            _ => config_bail!("--grid entries must be positive integers, got {part:?}"),
        }
    }
    if args.replications < 2 {
        config_bail!("--replications must be at least 2");
    }
    let report = ergodic_diagnostics(&model, &theta, &grid, args.replications, args.seed)?;
    let mut value = serde_json::to_value(&report)?;
    value["theta"] = params_value(&model, &theta);
    emit(args.out.as_deref(), to_json(&value).as_bytes())?;
    Ok(0)
}
