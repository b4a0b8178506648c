use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nv_relaxo_core::ensemble::{add_measurement_noise, default_tau_grid, synthesize_curve};
use nv_relaxo_core::fitters::{self, FitReport};
use nv_relaxo_core::inference::{self, adaptive_t_max};
use nv_relaxo_core::stats::{freedman_diaconis_edges, histogram_counts, mean, quantile_sorted};
use nv_relaxo_core::{Family, RatePopulation, T1Curve};

use crate::config::RunConfig;
use crate::{CliError, InferKind};

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Records the resolved configuration next to the outputs.
    fn manifest(
        &self,
        command: &str,
        cfg: &RunConfig,
        arguments: Value,
        inputs: &[&Path],
        outputs: &[&str],
    ) -> Result<(), CliError> {
        let m = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "arguments": arguments,
            "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "outputs": outputs,
            "config": cfg,
        });
        self.write_json("manifest.json", &m)
    }
}

fn read_curve(path: &Path) -> Result<T1Curve, CliError> {
    T1Curve::load_csv(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Whitespace- or comma-separated numbers; `#` starts a comment.
fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| {
                CliError::Input(format!("{} line {}: cannot parse `{tok}` as a number", path.display(), k + 1))
            })?;
            out.push(v);
        }
    }
    Ok(out)
}

pub fn simulate_background(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let model = cfg.ensemble_model("background");
    let surface = model.surface_model(cfg.surface.sigma_surf)?;
    let rates = model.background_rates(cfg.surface.sigma_surf)?;
    let pop = RatePopulation::uniform(rates)?;
    let t_max = match cfg.ensemble.t_max {
        Some(t) => t,
        None => adaptive_t_max(&pop, cfg.ensemble.n_tau)?,
    };
    let tau = default_tau_grid(t_max, cfg.ensemble.n_tau)?;
    let curve = add_measurement_noise(
        &synthesize_curve(&pop, &tau)?,
        cfg.ensemble.noise_sd,
        cfg.task_seed("background-noise"),
    )?;

    let mut sorted = pop.rates.clone();
    sorted.sort_by(f64::total_cmp);
    let histogram = match freedman_diaconis_edges(&sorted, 512) {
        Ok(edges) => {
            let counts = histogram_counts(&edges, &sorted);
            json!({ "edges": edges, "counts": counts })
        }
        Err(_) => json!({ "edges": [sorted[0], sorted[0]], "counts": [sorted.len()] }),
    };
    let population = json!({
        "n": sorted.len(),
        "c_surf": surface.c_surf,
        "gamma_bulk": surface.gamma_bulk,
        "mean_rate": mean(&sorted),
        "median_rate": quantile_sorted(&sorted, 0.5),
        "min_rate": sorted[0],
        "max_rate": sorted[sorted.len() - 1],
        "histogram": histogram,
    });
    let mut rates_txt = String::from("# background rate, s^-1\n");
    for r in &pop.rates {
        let _ = writeln!(rates_txt, "{r:.16e}");
    }

    out.write("curve.csv", &curve.to_csv())?;
    out.write_json("population.json", &population)?;
    out.write("rates.txt", &rates_txt)?;
    out.manifest(
        "simulate-background",
        cfg,
        json!({ "t_max": t_max }),
        &[],
        &["curve.csv", "population.json", "rates.txt"],
    )?;
    eprintln!("simulate-background: {} NVs, t_max {t_max:.4e} s", pop.len());
    Ok(())
}

pub fn fit(cfg: &RunConfig, out: &Output, curve_path: &Path, family: Family) -> Result<(), CliError> {
    let curve = read_curve(curve_path)?;
    let result = fitters::fit(&curve, family)?;
    let report = FitReport::from(&result);
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    out.write_json("fit.json", &report)?;
    out.manifest(
        "fit",
        cfg,
        json!({ "family": family.name() }),
        &[curve_path],
        &["fit.json"],
    )?;
    if !result.converged {
        return Err(CliError::NonConvergence(format!(
            "{} fit stopped after {} iterations",
            family.name(),
            result.iterations
        )));
    }
    Ok(())
}

pub fn infer(cfg: &RunConfig, out: &Output, kind: &InferKind) -> Result<(), CliError> {
    match kind {
        InferKind::Surface { curve } => {
            let target = read_curve(curve)?;
            let model = cfg.ensemble_model("surface-model");
            let r = inference::infer_surface_density_from_curve(
                &target,
                &model,
                &cfg.scans.surface_density,
                cfg.inference.interval_fraction,
            )?;
            write_scan(out, &r)?;
            out.manifest("infer surface", cfg, json!({}), &[curve], &["scan.json", "scan.txt"])?;
            eprintln!("infer surface: best sigma_surf {} nm^-2", r.best);
        }
        InferKind::CSurf { rates } => {
            let values = read_values(rates)?;
            let r = inference::infer_c_surf_from_histogram(&values, &cfg.histogram_fit(), &cfg.scans.c_surf)?;
            write_scan(out, &r)?;
            out.manifest("infer c-surf", cfg, json!({}), &[rates], &["scan.json", "scan.txt"])?;
            eprintln!("infer c-surf: best c_surf {:.4e} s^-1 nm^4", r.best);
        }
        InferKind::LabelSpacing { delta_gamma, sd } => {
            let r = inference::infer_label_spacing(*delta_gamma, *sd, &cfg.label_spacing()?)?;
            let mut table = String::from("# density_nm2 mean_delta_gamma\n");
            for (d, g) in r.densities.iter().zip(&r.mean_delta_gamma) {
                let _ = writeln!(table, "{d:.16e} {g:.16e}");
            }
            out.write_json("label_spacing.json", &r)?;
            out.write("response.txt", &table)?;
            out.manifest(
                "infer label-spacing",
                cfg,
                json!({ "delta_gamma": delta_gamma, "sd": sd }),
                &[],
                &["label_spacing.json", "response.txt"],
            )?;
            match r.spacing_max {
                Some(hi) => eprintln!("infer label-spacing: {:.3}-{:.3} nm", r.spacing_min, hi),
                None => eprintln!("infer label-spacing: >= {:.3} nm (below simulation floor)", r.spacing_min),
            }
        }
        InferKind::SaDensity { observed, .. } => {
            let values = read_values(observed)?;
            let r = inference::infer_sa_density(&values, &cfg.sa_density()?, &cfg.scans.sa_density)?;
            write_scan(out, &r)?;
            out.manifest("infer sa-density", cfg, json!({}), &[observed], &["scan.json", "scan.txt"])?;
            eprintln!("infer sa-density: best sigma_sa {} nm^-2", r.best);
        }
    }
    Ok(())
}

fn write_scan(out: &Output, r: &inference::DensityScanResult) -> Result<(), CliError> {
    out.write_json("scan.json", r)?;
    out.write("scan.txt", &r.to_table())
}

pub fn probability_map(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let map = inference::probability_map(cfg.single_nv.sigma_sa, &cfg.map()?)?;
    out.write_json("map.json", &map)?;
    out.write("density.dat", &map.density_matrix())?;
    out.write("p_single.dat", &map.p_single_matrix())?;
    out.write("contour.csv", &map.contour_csv())?;
    out.manifest(
        "probability-map",
        cfg,
        json!({}),
        &[],
        &["map.json", "density.dat", "p_single.dat", "contour.csv"],
    )?;
    if map.empty {
        eprintln!("probability-map: no NV saw a label signal; map is empty");
    } else {
        eprintln!(
            "probability-map: {} NVs kept, {:.3} of mass below p_single {}",
            map.n_events,
            map.mass_below(map.contour_level),
            map.contour_level
        );
    }
    Ok(())
}

pub fn sensitivity(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let table = inference::sensitivity_compare(&cfg.scans.sensitivity_density, &cfg.sensitivity()?)?;
    let slopes = json!({
        "slope_w": table.slope_w,
        "slope_long": table.slope_long,
        "slope_stre": table.slope_stre,
        "slope_true": table.slope_true,
        "ratio_w_long": table.ratio_w_long,
        "ratio_w_stre": table.ratio_w_stre,
        "t_max": table.t_max,
        "excluded_rows": table.rows.iter().filter(|r| !r.converged).count(),
    });
    out.write("sensitivity.csv", &table.to_csv())?;
    out.write_json("slopes.json", &slopes)?;
    out.manifest("sensitivity", cfg, json!({}), &[], &["sensitivity.csv", "slopes.json"])?;
    eprintln!(
        "sensitivity: slope ratios w/long {:.3}, w/stre {:.3}",
        table.ratio_w_long, table.ratio_w_stre
    );
    Ok(())
}
