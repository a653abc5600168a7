use std::fs;
use std::io::Write;
use std::path::Path;

use hazardlab::analytics::{
    algorithm_pairs, paired_t_test, rating_distribution_by_grasp, rating_time_histograms,
    trust_change_by_algorithm, AnalyticsError, TTestResult, TimeCenter,
};
use hazardlab::eventlog::{write_episode_table, write_event_log, GraspEpisode};
use hazardlab::hazardmodel::{
    cohort_records, expand_to_intervals, Censoring, Cohort, CovariateRow, HazardError,
};
use hazardlab::inference::{self, r_hat, summarize, InferenceError, ParamSummary, Prior, R_HAT_THRESHOLD};
use hazardlab::predict::{empirical_survival, posterior_survival_curves, uniform_grid, PredictiveCurves, SurvivalCurve};
use hazardlab::simgen::{simulate_sessions, SimConfig};
use hazardlab::{FitConfig, PosteriorChains};
use serde_json::json;

use crate::error::{CliError, Outcome, Result};
use crate::output::{OutDir, Run};
use crate::pipeline;
use crate::plots;
use crate::{
    AnalysisOptions, AnalyzeArgs, CurveOptions, DiagnoseArgs, FitArgs, IngestArgs, ModelOptions,
    PredictArgs, ReportArgs, SimulateArgs,
};

pub const EVENTS: &str = "events.jsonl";
pub const GROUND_TRUTH: &str = "ground_truth.csv";
pub const EPISODES: &str = "episodes.csv";
pub const EXCLUSIONS: &str = "exclusions.csv";
pub const CORRECTED_EVENTS: &str = "events_corrected.jsonl";
pub const TRUST_SUMMARY: &str = "trust_change_summary.csv";
pub const T_TEST: &str = "t_test.csv";
pub const GRASP_DISTRIBUTION: &str = "grasp_distribution.csv";
pub const HIST_EARLY: &str = "rating_time_hist_early.csv";
pub const HIST_FINAL: &str = "rating_time_hist_final.csv";
pub const BOX_SVG: &str = "trust_change_box.svg";
pub const GRASP_SVG: &str = "grasp_distribution.svg";
pub const HIST_SVG: &str = "rating_time_hist.svg";
pub const POSTERIOR: &str = "posterior.csv";
pub const SUMMARY: &str = "summary.csv";
pub const INTERVALS: &str = "intervals.csv";
pub const FIT_CONFIG: &str = "fit_config.json";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const CURVES: &str = "curves.csv";
pub const BAND: &str = "band.csv";
pub const SURVIVAL_SVG: &str = "survival.svg";
pub const MODEL_DIR: &str = "model";

const ANALYSIS_FILES: [&str; 8] = [
    TRUST_SUMMARY,
    T_TEST,
    GRASP_DISTRIBUTION,
    HIST_EARLY,
    HIST_FINAL,
    BOX_SVG,
    GRASP_SVG,
    HIST_SVG,
];
const FIT_FILES: [&str; 4] = [POSTERIOR, SUMMARY, INTERVALS, FIT_CONFIG];

fn write_text(out: &mut OutDir, name: &str, text: &str) -> Result<()> {
    out.write(name, |w| Ok(w.write_all(text.as_bytes())?))
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let run = Run::start("simulate");
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(CliError::io(p))?;
            serde_json::from_str::<SimConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(n) = a.subjects {
        config.n_subjects = n;
    }
    config.validate().map_err(CliError::config)?;

    let mut out = OutDir::prepare(&a.output.out, a.output.force, &[EVENTS, GROUND_TRUTH])?;
    let (events, truth) = simulate_sessions(&config).map_err(CliError::config)?;
    out.write(EVENTS, |w| Ok(write_event_log(&events, w)?))?;
    out.write(GROUND_TRUTH, |w| Ok(truth.write_csv(w)?))?;
    log::info!(
        "simulated {} subjects, {} events, {} grasps",
        events.subjects.len(),
        events.n_events(),
        truth.episodes.len()
    );
    let inputs: Vec<&Path> = a.config.iter().map(|p| p.as_path()).collect();
    run.record(&out, json!(config), &inputs, Some(config.seed))?;
    Ok(Outcome::Success)
}

fn events_config(a: &crate::EventsArgs) -> serde_json::Value {
    json!({
        "window": a.window,
        "latency_ms": a.latency_ms,
        "trial_factor": a.trial_factor,
        "keep_incomplete": a.keep_incomplete,
        "no_exclusions": a.no_exclusions,
    })
}

pub fn ingest(a: &IngestArgs) -> Result<Outcome> {
    let run = Run::start("ingest");
    let mut out = OutDir::prepare(&a.output.out, a.output.force, &[EPISODES, EXCLUSIONS, CORRECTED_EVENTS])?;
    let data = pipeline::ingest(&a.input)?;
    out.write(EPISODES, |w| Ok(write_episode_table(&data.segmentation.episodes, w)?))?;
    out.write(EXCLUSIONS, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["subject", "status", "reason"])?;
        if let Some(report) = &data.exclusions {
            for s in &report.included {
                c.write_record([s.as_str(), "included", ""])?;
            }
            for (s, reason) in &report.excluded {
                c.write_record([s.as_str(), "excluded", reason.as_str()])?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    out.write(CORRECTED_EVENTS, |w| Ok(write_event_log(&data.log, w)?))?;
    run.record(&out, events_config(&a.input), &[&a.input.events], None)?;
    Ok(Outcome::Success)
}

fn write_analysis(episodes: &[GraspEpisode], opts: &AnalysisOptions, out: &mut OutDir) -> Result<()> {
    let center: TimeCenter = opts.center.into();
    let (early, last) = rating_time_histograms(episodes, opts.bin_width, center).map_err(CliError::config)?;
    if early.is_empty() && last.is_empty() {
        log::warn!("no rated episodes; histograms are empty");
    }

    let summary = trust_change_by_algorithm(episodes);
    out.write(TRUST_SUMMARY, |w| Ok(summary.write_csv(w)?))?;

    let pairs = algorithm_pairs(episodes, opts.pairing.into());
    match paired_t_test(&pairs) {
        Ok(r) => {
            log::info!(
                "paired t-test over {} pairs: mean difference {:.3}, t = {}, p = {}",
                r.n_pairs,
                r.mean_diff,
                r.t_statistic.map_or("n/a".to_owned(), |t| format!("{t:.4}")),
                r.p_value.map_or("n/a".to_owned(), |p| format!("{p:.3e}"))
            );
            out.write(T_TEST, |w| Ok(r.write_csv(w)?))?;
        }
        Err(AnalyticsError::TooFewPairs(n)) => {
            log::warn!("only {n} subject pairs; t-test skipped");
            out.write(T_TEST, |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(TTestResult::CSV_HEADER)?;
                c.write_record([n.to_string(), String::new(), String::new(), String::new(), String::new(), String::new()])?;
                c.flush()?;
                Ok(())
            })?;
        }
        Err(e) => return Err(CliError::data(e)),
    }

    let by_grasp = rating_distribution_by_grasp(episodes);
    out.write(GRASP_DISTRIBUTION, |w| Ok(by_grasp.write_csv(w)?))?;
    out.write(HIST_EARLY, |w| Ok(early.write_csv(w)?))?;
    out.write(HIST_FINAL, |w| Ok(last.write_csv(w)?))?;

    let svg = plots::trust_change_box(&out.path(TRUST_SUMMARY))?;
    write_text(out, BOX_SVG, &svg)?;
    let svg = plots::grasp_distribution(&out.path(GRASP_DISTRIBUTION))?;
    write_text(out, GRASP_SVG, &svg)?;
    let axis = match center {
        TimeCenter::Pick => "seconds since pick",
        TimeCenter::Place => "seconds since place",
    };
    let svg = plots::rating_time_histograms(&out.path(HIST_EARLY), &out.path(HIST_FINAL), axis)?;
    write_text(out, HIST_SVG, &svg)
}

fn analysis_config(o: &AnalysisOptions) -> serde_json::Value {
    json!({
        "bin_width": o.bin_width,
        "center": TimeCenter::from(o.center),
        "pairing": hazardlab::analytics::PairingUnit::from(o.pairing),
    })
}

pub fn analyze(a: &AnalyzeArgs) -> Result<Outcome> {
    let run = Run::start("analyze");
    let mut out = OutDir::prepare(&a.output.out, a.output.force, &ANALYSIS_FILES)?;
    let data = pipeline::ingest(&a.input)?;
    write_analysis(&data.segmentation.episodes, &a.options, &mut out)?;
    let config = json!({ "events": events_config(&a.input), "analysis": analysis_config(&a.options) });
    run.record(&out, config, &[&a.input.events], None)?;
    Ok(Outcome::Success)
}

fn fit_config(m: &ModelOptions) -> Result<FitConfig> {
    let mut config = FitConfig {
        chains: m.chains,
        draws: m.draws,
        warmup: m.warmup,
        seed: m.seed,
        ..FitConfig::default()
    };
    if let Some(path) = &m.priors {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let priors: Vec<Prior> =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.priors = priors
            .try_into()
            .map_err(|p: Vec<Prior>| CliError::Config(format!("expected 4 priors, got {}", p.len())))?;
    }
    config.validate().map_err(CliError::config)?;
    Ok(config)
}

fn inference_error(e: InferenceError, cohort: Cohort) -> CliError {
    match e {
        InferenceError::InvalidConfig(_) => CliError::config(e),
        InferenceError::NoRatedEpisodes => zero_rated(cohort),
        other => CliError::data(other),
    }
}

fn zero_rated(cohort: Cohort) -> CliError {
    CliError::Data(format!("zero rated episodes in the {} cohort", cohort.as_str()))
}

fn print_summary(summary: &ParamSummary) {
    println!(
        "{:<14} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "parameter", "mean", "sd", "hdi_low", "hdi_high", "r_hat"
    );
    for r in &summary.rows {
        println!(
            "{:<14} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8}",
            r.parameter,
            r.mean,
            r.sd,
            r.low,
            r.high,
            r.r_hat.value().map_or("n/a".to_owned(), |v| format!("{v:.4}"))
        );
    }
    let verdict = if summary.all_converged() { "passed" } else { "FAILED" };
    println!("r-hat gate (< {R_HAT_THRESHOLD}): {verdict}");
}

fn outcome_of(summary: &ParamSummary) -> Outcome {
    if summary.all_converged() {
        Outcome::Success
    } else {
        log::warn!("r-hat at or above {R_HAT_THRESHOLD}; outputs written but the chains have not converged");
        Outcome::NotConverged
    }
}

struct FitOutput {
    posterior: PosteriorChains,
    summary: ParamSummary,
    config: serde_json::Value,
}

fn run_fit(episodes: &[GraspEpisode], cohort: Cohort, m: &ModelOptions, out: &mut OutDir) -> Result<FitOutput> {
    let config = fit_config(m)?;
    let censoring = if m.censored { Censoring::RightCensored } else { Censoring::RatedOnly };
    let records = cohort_records(episodes, cohort);
    if records.iter().all(|r| r.rating_time.is_none()) {
        return Err(zero_rated(cohort));
    }
    let table = expand_to_intervals(&records, m.width, censoring).map_err(|e| match e {
        HazardError::InvalidWidth(_) => CliError::config(e),
        other => CliError::data(other),
    })?;
    log::info!(
        "{} cohort: {} episodes, {} rated, {} interval rows",
        cohort.as_str(),
        table.n_episodes,
        table.n_rated,
        table.rows.len()
    );
    let posterior = inference::fit(&table, &config).map_err(|e| inference_error(e, cohort))?;
    let summary = summarize(&posterior);
    out.write(POSTERIOR, |w| Ok(posterior.write_csv(w)?))?;
    out.write(SUMMARY, |w| Ok(summary.write_csv(w)?))?;
    out.write(INTERVALS, |w| Ok(table.write_csv(w)?))?;
    let described = json!({
        "cohort": cohort,
        "width": m.width,
        "censoring": match censoring {
            Censoring::RatedOnly => "rated_only",
            Censoring::RightCensored => "right_censored",
        },
        "fit": config,
        "acceptance_rates": posterior.chains.iter().map(|c| c.acceptance_rate).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&described).map_err(CliError::data)?;
    write_text(out, FIT_CONFIG, &format!("{text}\n"))?;
    Ok(FitOutput {
        posterior,
        summary,
        config: described,
    })
}

pub fn fit(a: &FitArgs, quiet: bool) -> Result<Outcome> {
    let run = Run::start("fit");
    let mut out = OutDir::prepare(&a.output.out, a.output.force, &FIT_FILES)?;
    let data = pipeline::ingest(&a.input)?;
    let result = run_fit(&data.segmentation.episodes, a.cohort.into(), &a.model, &mut out)?;
    if !quiet {
        print_summary(&result.summary);
    }
    let config = json!({ "events": events_config(&a.input), "model": result.config });
    run.record(&out, config, &[&a.input.events], Some(a.model.seed))?;
    Ok(outcome_of(&result.summary))
}

fn read_posterior(path: &Path) -> Result<PosteriorChains> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    PosteriorChains::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn diagnose(a: &DiagnoseArgs, quiet: bool) -> Result<Outcome> {
    let run = Run::start("diagnose");
    let mut out = OutDir::prepare(&a.output.out, a.output.force, &[DIAGNOSTICS])?;
    let posterior = read_posterior(&a.posterior)?;
    r_hat(&posterior, 0).map_err(|e| CliError::Data(format!("{}: {e}", a.posterior.display())))?;
    let summary = summarize(&posterior);
    out.write(DIAGNOSTICS, |w| Ok(summary.write_csv(w)?))?;
    if !quiet {
        print_summary(&summary);
    }
    run.record(&out, json!({ "r_hat_threshold": R_HAT_THRESHOLD }), &[&a.posterior], None)?;
    Ok(outcome_of(&summary))
}

fn predictive(
    episodes: &[GraspEpisode],
    cohort: Cohort,
    posterior: &PosteriorChains,
    opts: &CurveOptions,
    seed: u64,
) -> Result<(PredictiveCurves, SurvivalCurve)> {
    let records = cohort_records(episodes, cohort);
    if records.is_empty() {
        return Err(CliError::Data(format!("no episodes in the {} cohort", cohort.as_str())));
    }
    let rows: Vec<CovariateRow> = records.iter().map(|r| r.x).collect();
    let rated: Vec<f64> = records.iter().filter_map(|r| r.rating_time).collect();
    let end = opts.grid_end.unwrap_or(match cohort {
        Cohort::Early => 30.0,
        Cohort::Final => 60.0,
    });
    if !(opts.grid_step > 0.0 && opts.grid_step.is_finite() && end >= 0.0 && end.is_finite()) {
        return Err(CliError::Config("grid needs a positive step and a non-negative end".into()));
    }
    let grid = uniform_grid(end, opts.grid_step);
    let available = posterior.total_draws();
    let n = opts.curves.min(available);
    if n < opts.curves {
        log::warn!("posterior has only {available} draws; using {n} curves");
    }
    let curves = posterior_survival_curves(posterior, &rows, &grid, n, seed).map_err(CliError::data)?;
    let empirical = empirical_survival(&rated, &grid);
    log::info!(
        "empirical survival inside the 5-95% band at {:.1}% of grid points",
        100.0 * curves.band_coverage(&empirical)
    );
    Ok((curves, empirical))
}

fn write_band_and_plot(
    out: &mut OutDir,
    curves: &PredictiveCurves,
    empirical: &SurvivalCurve,
    cohort: Cohort,
) -> Result<()> {
    out.write(BAND, |w| Ok(curves.write_band_csv(empirical, w)?))?;
    let title = format!("Predicted survival, {} grasps", cohort.as_str());
    let svg = plots::survival_overlay(&out.path(BAND), &title)?;
    write_text(out, SURVIVAL_SVG, &svg)
}

fn curve_config(o: &CurveOptions, cohort: Cohort, seed: u64) -> serde_json::Value {
    json!({ "cohort": cohort, "grid_end": o.grid_end, "grid_step": o.grid_step, "curves": o.curves, "seed": seed })
}

pub fn predict(a: &PredictArgs, _quiet: bool) -> Result<Outcome> {
    let run = Run::start("predict");
    let mut out = OutDir::prepare(&a.output.out, a.output.force, &[CURVES, BAND, SURVIVAL_SVG])?;
    let posterior = read_posterior(&a.posterior)?;
    let data = pipeline::ingest(&a.input)?;
    let cohort: Cohort = a.cohort.into();
    let (curves, empirical) = predictive(&data.segmentation.episodes, cohort, &posterior, &a.curves, a.seed)?;
    out.write(CURVES, |w| Ok(curves.write_curves_csv(w)?))?;
    write_band_and_plot(&mut out, &curves, &empirical, cohort)?;
    let config = json!({ "events": events_config(&a.input), "predict": curve_config(&a.curves, cohort, a.seed) });
    run.record(&out, config, &[&a.input.events, &a.posterior], Some(a.seed))?;
    Ok(Outcome::Success)
}

pub fn report(a: &ReportArgs, quiet: bool) -> Result<Outcome> {
    let run = Run::start("report");
    let mut top_files: Vec<&str> = ANALYSIS_FILES.to_vec();
    top_files.extend([BAND, SURVIVAL_SVG]);
    let mut out = OutDir::prepare(&a.output.out, a.output.force, &top_files)?;
    let mut model_files: Vec<&str> = FIT_FILES.to_vec();
    model_files.push(CURVES);
    let mut model_out = OutDir::prepare(&a.output.out.join(MODEL_DIR), a.output.force, &model_files)?;

    let data = pipeline::ingest(&a.input)?;
    let episodes = &data.segmentation.episodes;
    write_analysis(episodes, &a.options, &mut out)?;

    let cohort: Cohort = a.cohort.into();
    let fitted = run_fit(episodes, cohort, &a.model, &mut model_out)?;
    if !quiet {
        print_summary(&fitted.summary);
    }
    let (curves, empirical) = predictive(episodes, cohort, &fitted.posterior, &a.curves, a.model.seed)?;
    model_out.write(CURVES, |w| Ok(curves.write_curves_csv(w)?))?;
    write_band_and_plot(&mut out, &curves, &empirical, cohort)?;

    let config = json!({
        "events": events_config(&a.input),
        "analysis": analysis_config(&a.options),
        "model": fitted.config,
        "predict": curve_config(&a.curves, cohort, a.model.seed),
    });
    run.record(&model_out, config.clone(), &[&a.input.events], Some(a.model.seed))?;
    run.record(&out, config, &[&a.input.events], Some(a.model.seed))?;
    Ok(outcome_of(&fitted.summary))
}
