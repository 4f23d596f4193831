use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Deserialize;

use tvpbart::io::{
    file_hash, load_dataset, load_panel, read_manifest, read_store, simulate_dgp, simulate_toy_phillips, timestamp,
    toy_phillips_design, write_dataset, write_panel, write_store, DgpSpec, PanelSpec, RunInfo, RunManifest, ToyLaw,
};
use tvpbart::model::{prepare_design, Dataset, DesignData, ModelConfig};
use tvpbart::sampler::{PosteriorDraws, Sampler};
use tvpbart::structural::{
    identify_bc_shock, irf_all, phillips_multiplier, quantile, regime_summary, scenario_grid, scenario_irf,
    share_path, summarize_band, time_averages, waic as waic_of, IrfSummary,
};

use crate::select::{self, CliError, CliResult};
use crate::{EstimateArgs, IdentifyArgs, IrfArgs, ScenarioArgs, ShockArgs, SimulateArgs, ToyArgs, WaicArgs};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Transforms {
    #[serde(default)]
    endogenous: PanelSpec,
    #[serde(default)]
    modifiers: PanelSpec,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}

fn hash(path: &Path) -> CliResult<String> {
    file_hash(path).map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> CliResult<RunManifest> {
    if path.is_dir() {
        Ok(read_manifest(path)?)
    } else {
        read_json(path)
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn estimate(a: EstimateArgs) -> CliResult<()> {
    let started_at = timestamp();
    let mut inputs = BTreeMap::new();
    inputs.insert("endogenous".to_string(), hash(&a.data)?);
    inputs.insert("modifiers".to_string(), hash(&a.modifiers)?);
    if let Some(t) = &a.transforms {
        inputs.insert("transforms".to_string(), hash(t)?);
    }
    let mut config: ModelConfig = match (&a.manifest, &a.config) {
        (Some(m), _) => {
            let manifest = load_manifest(m)?;
            for (key, hash) in &inputs {
                if manifest.inputs.get(key) != Some(hash) {
                    return Err(CliError::user(format!("input `{key}` differs from the one recorded in the manifest")));
                }
            }
            if manifest.inputs.contains_key("transforms") && a.transforms.is_none() {
                return Err(CliError::user("the manifest records a transforms file; pass it with --transforms"));
            }
            inputs = manifest.inputs;
            manifest.config
        }
        (None, Some(c)) => {
            inputs.insert("config".to_string(), hash(c)?);
            read_json(c)?
        }
        (None, None) => return Err(CliError::user("either --config or --manifest is required")),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let transforms: Transforms = match &a.transforms {
        Some(t) => read_json(t)?,
        None => Transforms::default(),
    };
    let config = config.validate()?;
    let dataset = load_dataset(&a.data, &transforms.endogenous, &a.modifiers, &transforms.modifiers)?;
    let design = prepare_design(&dataset, &config)?;
    let total = config.n_draws;
    let step = (total / 10).max(1);
    let quiet = a.quiet;
    let mut sampler = Sampler::new(config, design)?;
    let draws = sampler.run_with(|sweep, _| {
        if !quiet && (sweep + 1) % step == 0 {
            eprintln!("sweep {}/{total}", sweep + 1);
        }
    })?;
    let info = RunInfo {
        inputs,
        started_at,
        finished_at: timestamp(),
    };
    let manifest = write_store(&a.out, &draws, &info)?;
    println!(
        "{} retained draws written to {} (content hash {})",
        manifest.sweeps.len(),
        a.out.display(),
        manifest.content_hash
    );
    Ok(())
}

struct ShockSetup {
    posterior: PosteriorDraws,
    recession: Vec<bool>,
    targets: (usize, usize),
}

fn shock_setup(a: &ShockArgs) -> CliResult<ShockSetup> {
    let posterior = read_store(&a.store)?;
    let d = &posterior.design;
    let out = select::index_of(&d.variable_names, &a.output, "variable")?;
    let unemp = select::index_of(&d.variable_names, &a.unemployment, "variable")?;
    let recession = select::flags(&d.dates, &a.recessions)?;
    Ok(ShockSetup {
        posterior,
        recession,
        targets: (out, unemp),
    })
}

fn summary_rows(
    w: &mut csv::Writer<fs::File>,
    lead: &[String],
    s: &IrfSummary,
    names: &[String],
    columns: &[usize],
) -> CliResult<()> {
    for h in 0..s.median.nrows() {
        for &m in columns {
            let mut rec = lead.to_vec();
            rec.extend([
                (h + 1).to_string(),
                names[m].clone(),
                fmt(s.lower[(h, m)]),
                fmt(s.median[(h, m)]),
                fmt(s.upper[(h, m)]),
            ]);
            w.write_record(&rec)?;
        }
    }
    Ok(())
}

pub fn irf(a: IrfArgs) -> CliResult<()> {
    let (lo, hi) = select::band(a.coverage)?;
    if a.horizons == 0 {
        return Err(CliError::user("--horizons must be positive"));
    }
    let setup = shock_setup(&a.shock)?;
    let design = &setup.posterior.design;
    let prices = a
        .prices
        .iter()
        .map(|p| select::index_of(&design.variable_names, p, "variable"))
        .collect::<CliResult<Vec<_>>>()?;
    let periods = select::periods(&design.dates, &a.time)?;
    let res = irf_all(
        &setup.posterior.draws,
        design,
        &setup.recession,
        setup.targets,
        &periods,
        a.horizons,
    )?;
    let names = &design.variable_names;
    let all: Vec<usize> = (0..names.len()).collect();
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["period", "horizon", "variable", "lower", "median", "upper"])?;
    for (i, &t) in periods.iter().enumerate() {
        let mats: Vec<DMatrix<f64>> = res.responses.iter().map(|r| r[i].clone()).collect();
        summary_rows(&mut w, &[design.dates[t].clone()], &summarize_band(&mats, lo, hi), names, &all)?;
    }
    if periods.len() > 1 {
        let avg = time_averages(&res)?;
        summary_rows(&mut w, &["average".to_string()], &summarize_band(&avg, lo, hi), names, &all)?;
    }
    let unemp = setup.targets.1;
    for &p in &prices {
        for (i, &t) in periods.iter().enumerate() {
            for h in 0..a.horizons {
                let ratios: Vec<f64> = res
                    .responses
                    .iter()
                    .filter_map(|r| {
                        let m = &r[i];
                        phillips_multiplier(&[m[(h, p)]], &[m[(h, unemp)]])[0]
                    })
                    .collect();
                let cells = if ratios.is_empty() {
                    vec![String::new(); 3]
                } else {
                    vec![fmt(quantile(&ratios, lo)), fmt(quantile(&ratios, 0.5)), fmt(quantile(&ratios, hi))]
                };
                let mut rec = vec![design.dates[t].clone(), (h + 1).to_string(), format!("multiplier:{}", names[p])];
                rec.extend(cells);
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    if res.explosive > 0 {
        eprintln!(
            "warning: {} of {} draw-period pairs have an explosive companion matrix",
            res.explosive,
            res.responses.len() * periods.len()
        );
    }
    println!("responses for {} periods written to {}", periods.len(), a.out.display());
    Ok(())
}

pub fn identify(a: IdentifyArgs) -> CliResult<()> {
    let (lo, hi) = select::band(a.coverage)?;
    let setup = shock_setup(&a.shock)?;
    let p = &setup.posterior;
    let shocks = p
        .draws
        .par_iter()
        .map(|d| identify_bc_shock(d, &p.design, &setup.recession, setup.targets))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    out.write_record(["draw", "sweep", "factor", "sign", "scale", "sign_conflict"])?;
    let mut counts = BTreeMap::new();
    let mut conflicts = 0;
    for (i, (d, s)) in p.draws.iter().zip(&shocks).enumerate() {
        *counts.entry(s.factor + 1).or_insert(0usize) += 1;
        conflicts += usize::from(s.sign_conflict);
        out.write_record([
            i.to_string(),
            d.sweep.to_string(),
            (s.factor + 1).to_string(),
            fmt(s.sign),
            fmt(s.scale),
            s.sign_conflict.to_string(),
        ])?;
    }
    out.flush()?;
    for (f, c) in &counts {
        eprintln!("factor {f}: {:.1}% of draws", 100.0 * *c as f64 / shocks.len() as f64);
    }
    if conflicts > 0 {
        eprintln!("warning: {conflicts} draws load output and unemployment with the same sign");
    }
    if let Some(path) = &a.shares {
        let paths = p
            .draws
            .par_iter()
            .zip(&shocks)
            .map(|(d, s)| share_path(d, s.factor))
            .collect::<Result<Vec<_>, _>>()?;
        let s = summarize_band(&paths, lo, hi);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "variable", "lower", "median", "upper"])?;
        for t in 0..s.median.nrows() {
            for (m, name) in p.design.variable_names.iter().enumerate() {
                w.write_record([
                    p.design.dates[t].clone(),
                    name.clone(),
                    fmt(s.lower[(t, m)]),
                    fmt(s.median[(t, m)]),
                    fmt(s.upper[(t, m)]),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

pub fn scenario(a: ScenarioArgs) -> CliResult<()> {
    let (lo, hi) = select::band(a.coverage)?;
    if a.horizons == 0 {
        return Err(CliError::user("--horizons must be positive"));
    }
    let setup = shock_setup(&a.shock)?;
    let p = &setup.posterior;
    let design = &p.design;
    let vary = select::index_of(&design.modifier_names, &a.vary, "modifier")?;
    let anchor = match &a.anchor_window {
        Some(w) => select::window(&design.dates, w)?,
        None => 0..design.periods(),
    };
    let columns = if a.prices.is_empty() {
        (0..design.variables()).collect()
    } else {
        a.prices
            .iter()
            .map(|v| select::index_of(&design.variable_names, v, "variable"))
            .collect::<CliResult<Vec<_>>>()?
    };
    let grid = scenario_grid(&design.z, vary, &a.percentiles, anchor)?;
    let per_draw = p
        .draws
        .par_iter()
        .map(|d| {
            let shock = identify_bc_shock(d, design, &setup.recession, setup.targets)?;
            Ok(grid.iter().map(|z| scenario_irf(d, design, z, &shock, a.horizons)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, tvpbart::error::Error>>()?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["percentile", "modifier_value", "horizon", "variable", "lower", "median", "upper"])?;
    for (g, z) in grid.iter().enumerate() {
        let mats: Vec<DMatrix<f64>> = per_draw.iter().map(|r| r[g].clone()).collect();
        summary_rows(
            &mut w,
            &[fmt(a.percentiles[g]), fmt(z[vary])],
            &summarize_band(&mats, lo, hi),
            &design.variable_names,
            &columns,
        )?;
    }
    w.flush()?;
    println!(
        "{} scenarios x {} horizons x {} variables written to {}",
        grid.len(),
        a.horizons,
        columns.len(),
        a.out.display()
    );
    Ok(())
}

pub fn waic(a: WaicArgs) -> CliResult<()> {
    let p = read_store(&a.store)?;
    let loglik = if a.subset.is_empty() {
        p.loglik.clone()
    } else {
        let idx = a
            .subset
            .iter()
            .map(|v| select::index_of(&p.design.variable_names, v, "variable"))
            .collect::<CliResult<Vec<_>>>()?;
        let rows = p
            .draws
            .par_iter()
            .map(|d| d.log_likelihood(&p.design, Some(&idx)))
            .collect::<Result<Vec<_>, _>>()?;
        let t = p.design.periods();
        DMatrix::from_fn(rows.len(), t, |s, j| rows[s][j])
    };
    let w = waic_of(&loglik)?;
    println!("waic,lpd,p_waic");
    println!("{},{},{}", w.waic, w.lpd, w.p_waic);
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    fs::create_dir_all(&a.out)?;
    if a.toy {
        let law: ToyLaw = read_json(&a.spec)?;
        let (ds, beta) = simulate_toy_phillips(a.periods, &law, a.intercept, a.noise_sd, a.seed)?;
        write_panel(&a.out.join("toy.csv"), &ds.dates, &ds.variable_names, &ds.y)?;
        write_panel(
            &a.out.join("truth.csv"),
            &ds.dates,
            &["beta".to_string()],
            &DMatrix::from_column_slice(beta.len(), 1, &beta),
        )?;
    } else {
        let spec: DgpSpec = read_json(&a.spec)?;
        let sim = simulate_dgp(&spec, a.seed)?;
        write_dataset(&sim.dataset, &a.out.join("endogenous.csv"), &a.out.join("modifiers.csv"))?;
        fs::write(a.out.join("truth.json"), serde_json::to_vec(&sim.truth)?)?;
    }
    println!("simulated data written to {}", a.out.display());
    Ok(())
}

fn toy_dataset(path: &Path) -> CliResult<Dataset> {
    let panel = load_panel(path, &PanelSpec::default())?;
    if panel.names.len() != 2 {
        return Err(CliError::user(format!(
            "toy data needs exactly two series after the date column, found {}",
            panel.names.len()
        )));
    }
    let t = panel.dates.len();
    Ok(Dataset::new(
        panel.values,
        DMatrix::from_fn(t, 1, |r, _| r as f64),
        panel.names,
        vec!["trend".to_string()],
        panel.dates.iter().map(|d| d.to_string()).collect(),
    )?)
}

fn toy_config(a: &ToyArgs) -> ModelConfig {
    ModelConfig {
        lags: 1,
        q_beta: 1,
        q_q: 1,
        s_beta: a.trees,
        s_q: a.vol_trees,
        n_draws: a.draws,
        n_burn: a.burn,
        seed: a.seed,
        scale_data: false,
        ..ModelConfig::default()
    }
}

fn coefficient_bands(p: &PosteriorDraws, design: &DesignData, regressor: usize) -> Vec<[f64; 4]> {
    (0..design.periods())
        .map(|t| {
            let xs: Vec<f64> = p
                .draws
                .iter()
                .map(|d| design.coefficients_to_original(0, &d.coefficients(0, t))[regressor])
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            [mean, quantile(&xs, 0.16), quantile(&xs, 0.5), quantile(&xs, 0.84)]
        })
        .collect()
}

pub fn toy_phillips(a: ToyArgs) -> CliResult<()> {
    let ds = toy_dataset(&a.data)?;
    let design = toy_phillips_design(&ds)?;
    let config = toy_config(&a).validate()?;
    let posterior = Sampler::new(config, design.clone())?.run()?;
    let summary = regime_summary(&posterior.draws, &design, 0, 1)?;
    println!(
        "coefficient on {} in the {} equation, first tree of the mean factor",
        ds.variable_names[1], ds.variable_names[0]
    );
    println!(
        "regimes from the tree of retained draw {} (structure shared by {:.1}% of draws)",
        summary.draw,
        100.0 * summary.support
    );
    for line in summary.describe(&design.modifier_names) {
        println!("  {line}");
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        let bands = coefficient_bands(&posterior, &design, 1);
        let mut w = csv::Writer::from_path(dir.join("coefficient.csv"))?;
        w.write_record(["date", "mean", "lower", "median", "upper"])?;
        for (t, b) in bands.iter().enumerate() {
            w.write_record([design.dates[t].clone(), fmt(b[0]), fmt(b[1]), fmt(b[2]), fmt(b[3])])?;
        }
        w.flush()?;
        fs::write(dir.join("regimes.json"), serde_json::to_vec_pretty(&summary)?)?;
    }
    Ok(())
}
