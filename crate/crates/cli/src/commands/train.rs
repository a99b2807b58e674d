//! Fits one model per instrument on its training window.

use pe_dbn::inference::{map_pe, smooth};
use pe_dbn::learning::{em_fit, Init, PriorSpec};
use pe_dbn::StateGrids;
use rayon::prelude::*;

use super::{ensure_dir, load_split};
use crate::config::{GridChoice, PriorKind, RunConfig};
use crate::error::CliError;
use crate::report::{
    write_json, FitSummary, ModelFile, PeStar, Window, MODEL_SCHEMA, SCHEMA_VERSION,
};
use crate::universe::{self, derive_seed, Instrument};

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let instruments = universe::selected(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let results: Vec<Result<bool, CliError>> = instruments
        .par_iter()
        .map(|inst| train_one(cfg, inst))
        .collect();
    let mut not_converged = Vec::new();
    for (inst, r) in instruments.iter().zip(results) {
        if !r? {
            not_converged.push(inst.symbol.clone());
        }
    }
    if not_converged.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(not_converged))
    }
}

/// Grids for a training window under the configured choices.
pub fn grids_for(cfg: &RunConfig, observed_pe: &[f64]) -> Result<StateGrids, CliError> {
    let m = &cfg.model;
    let auto = StateGrids::auto_with(observed_pe, m.z_count, m.z_half_width, m.pe_count)?;
    let z = match &m.z_levels {
        GridChoice::Auto => auto.z_values().to_vec(),
        GridChoice::Explicit(v) => v.clone(),
    };
    let pe = match &m.pe_levels {
        GridChoice::Auto => auto.pe_values().to_vec(),
        GridChoice::Explicit(v) => v.clone(),
    };
    Ok(StateGrids::new(z, pe)?)
}

pub fn prior_for(cfg: &RunConfig, grids: &StateGrids) -> Result<PriorSpec, CliError> {
    let (m, n) = (grids.z_len(), grids.pe_len());
    Ok(match cfg.model.prior {
        PriorKind::Flat => PriorSpec::flat(m, n),
        PriorKind::Persistent => {
            PriorSpec::persistent(m, n, cfg.model.prior_mean_dwell, cfg.model.prior_strength)?
        }
    })
}

/// Returns whether EM converged. The model file is written either way.
fn train_one(cfg: &RunConfig, inst: &Instrument) -> Result<bool, CliError> {
    let path = universe::model_path(&cfg.out_dir, &inst.symbol);
    if path.exists() {
        std::fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
    }
    let (train, _) = load_split(cfg, &inst.symbol, None)?;
    let grids = grids_for(cfg, &train.observed_pe())?;
    let prior = prior_for(cfg, &grids)?;
    let fit_seed = derive_seed(cfg.seed, &inst.symbol);
    let fit = em_fit(
        train.y(),
        &grids,
        &prior,
        Init::Random,
        &cfg.em_config(fit_seed),
    )?;
    let bundle = smooth(train.y(), &fit.params, &grids)?;
    let pe = map_pe(&bundle, &grids);
    if !fit.converged {
        log::warn!(
            "{}: EM stopped after {} iterations without converging",
            inst.symbol,
            fit.iterations
        );
    }
    let file = ModelFile {
        schema: MODEL_SCHEMA.into(),
        version: SCHEMA_VERSION,
        symbol: inst.symbol.clone(),
        market: inst.market.clone(),
        seed: cfg.seed,
        fit_seed,
        config: cfg.clone(),
        grids,
        params: fit.params.clone(),
        fit: FitSummary {
            converged: fit.converged,
            iterations: fit.iterations,
            restart: fit.restart,
            final_log_posterior: fit.final_log_posterior(),
            log_posterior: fit.log_posterior.clone(),
        },
        pe_star: PeStar {
            index: pe.index,
            value: pe.value,
            marginal: pe.marginal,
        },
        train: Window {
            start: train.dates()[0],
            end: *train.dates().last().expect("training window is non-empty"),
            observations: train.len(),
        },
    };
    write_json(&path, &file)?;
    Ok(fit.converged)
}
