//! The end-to-end run: Taylor extraction at the symmetric minimum, sector
//! reduction, the five-mode solution, mode mixing, and the first-order
//! correction, assembled into one archive.

use crate::archive::{
    ArchiveMeta, Delta1Doc, KineticModeRecord, ModeRecord, ReducedRecord, SigmaDoc, SigmaRecord,
    TauDoc, TaylorDoc, TensorArchive,
};
use crate::config::RunConfig;
use crate::{CliError, CliResult};
use snbody_core::{
    beta_table_analytic, build_system, derivative_catalog, first_order_energy,
    first_order_wavefunction, h1_effective, mix_force_to_modes, mix_kinetic_to_modes,
    normal_modes, reduce_cubic_force, reduce_cubic_kinetic, reduce_sigma, Block, CgContext,
    KineticModeCubic, Mode, ModeCubic, NormalModeSolution, ParticleCount, ReducedCubic,
    SigmaBlock,
};
use std::collections::BTreeMap;

fn stage<T>(label: &'static str, r: snbody_core::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Stage { stage: label, source })
}

/// Runs the whole pipeline for one configuration. Purely functional: the
/// archive is returned in memory, and saving it is the caller's move.
pub fn run_pipeline(config: &RunConfig) -> CliResult<TensorArchive> {
    config.validate()?;
    let (spec, canonical) = config.model.load(config.lambda)?;
    let meta = ArchiveMeta::new(config.n, &canonical);
    let n = stage("setup", ParticleCount::new(config.n))?;

    let system = stage("extract", build_system(&spec, n))?;
    let taylor = &system.taylor;

    let sol = stage("modes", normal_modes(taylor, n))?;
    let sigma_f = stage("reduce", reduce_sigma(&taylor.quadratic_force, n))?;
    let sigma_g = stage(
        "reduce",
        reduce_sigma(&taylor.quadratic_kinetic.as_product(), n),
    )?;
    let reduced_f = stage("reduce", reduce_cubic_force(&taylor.scalars.force3, n))?;
    let reduced_g = stage("reduce", reduce_cubic_kinetic(&taylor.scalars.kinetic3, n))?;
    let tau_f = mix_force_to_modes(&reduced_f, &sol);
    let tau_g = mix_kinetic_to_modes(&reduced_g, &sol);

    let ctx = CgContext::new(n);
    let h1 = stage("first-order", h1_effective(&taylor.scalars, &sol, &ctx))?;
    let d1 = stage("first-order", first_order_wavefunction(&h1, &sol, &ctx))?;
    let energy1 = first_order_energy(&h1);

    let beta_csv = stage("tables", render_beta_csv(&meta, n))?;
    let frequencies_csv = render_frequencies_csv(&meta, &sol, n);

    Ok(TensorArchive {
        taylor: TaylorDoc { meta: meta.clone(), system },
        sigma: SigmaDoc {
            meta: meta.clone(),
            force: sigma_records(&sigma_f),
            kinetic: sigma_records(&sigma_g),
            cubic_force: reduced_records(&reduced_f),
            cubic_kinetic: reduced_records(&reduced_g),
        },
        tau: TauDoc {
            meta: meta.clone(),
            lambda: mode_map(&sol.lambda),
            omega: mode_map(&sol.omega),
            degenerate_sectors: sol
                .degenerate_sectors
                .iter()
                .map(|a| a.to_string())
                .collect(),
            cubic_force: mode_records(&tau_f),
            cubic_kinetic: kinetic_mode_records(&tau_g),
        },
        delta1: Delta1Doc {
            meta,
            delta: config.delta,
            energy1,
            h1_cubic: mode_records(&h1.cubic),
            h1_linear: linear_map(&h1.linear),
            delta1_cubic: mode_records(&d1.cubic),
            delta1_linear: linear_map(&d1.linear),
        },
        beta_csv,
        frequencies_csv,
    })
}

fn sigma_records(blocks: &[SigmaBlock]) -> Vec<SigmaRecord> {
    blocks
        .iter()
        .map(|b| SigmaRecord {
            sector: b.alpha.to_string(),
            rows: (0..b.mat.nrows())
                .map(|i| (0..b.mat.ncols()).map(|j| b.mat[(i, j)]).collect())
                .collect(),
        })
        .collect()
}

fn reduced_records(r: &ReducedCubic) -> Vec<ReducedRecord> {
    r.entries
        .iter()
        .map(|(&(block, alphas, variant), &value)| ReducedRecord {
            block: block.name().to_string(),
            sectors: alphas.iter().map(|a| a.digit()).collect(),
            variant: variant.to_string(),
            value,
        })
        .collect()
}

fn mode_records(m: &ModeCubic) -> Vec<ModeRecord> {
    m.entries
        .iter()
        .map(|(&(modes, variant), &value)| ModeRecord {
            modes: modes.map(|m| m.label().to_string()),
            variant: variant.to_string(),
            value,
        })
        .collect()
}

fn kinetic_mode_records(k: &KineticModeCubic) -> Vec<KineticModeRecord> {
    k.entries
        .iter()
        .map(|(&(block, modes, variant), &value)| KineticModeRecord {
            block: block.name().to_string(),
            modes: modes.map(|m| m.label().to_string()),
            variant: variant.to_string(),
            value,
        })
        .collect()
}

fn mode_map(map: &BTreeMap<Mode, f64>) -> BTreeMap<String, f64> {
    map.iter().map(|(m, &v)| (m.label().to_string(), v)).collect()
}

fn linear_map(map: &BTreeMap<Mode, f64>) -> BTreeMap<String, f64> {
    mode_map(map)
}

/// The analytic reduction tables at N, one row per realized (graph, key)
/// cell, for every derivative-refined catalog graph.
pub fn render_beta_csv(meta: &ArchiveMeta, n: ParticleCount) -> snbody_core::Result<String> {
    let mut out = meta.csv_header();
    out.push_str("graph,key,value\n");
    for block in Block::ALL {
        for id in derivative_catalog(block) {
            for (key, value) in beta_table_analytic(id, n)? {
                out.push_str(&format!("{id},{key},{value}\n"));
            }
        }
    }
    Ok(out)
}

/// The five-mode spectrum with degeneracies.
pub fn render_frequencies_csv(
    meta: &ArchiveMeta,
    sol: &NormalModeSolution,
    n: ParticleCount,
) -> String {
    let mut out = meta.csv_header();
    out.push_str("mode,multiplicity,lambda,omega\n");
    for m in Mode::ALL {
        out.push_str(&format!(
            "{},{},{},{}\n",
            m.label(),
            m.dim(n),
            sol.lambda[&m],
            sol.omega[&m]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelSource;

    #[test]
    fn pipeline_runs_and_renders_for_the_interacting_builtin() {
        let config = RunConfig::new(6, ModelSource::Builtin("harmonic-harmonic".into()));
        let archive = run_pipeline(&config).unwrap();
        assert_eq!(archive.tau.omega.len(), 5);
        // All twenty-five scalar classes are populated at N = 6 for this
        // model's force side or are structural zeros dropped from the map;
        // the frequency table always carries five rows.
        let lines: Vec<&str> = archive.frequencies_csv.lines().collect();
        assert_eq!(lines.len(), 4 + 1 + 5);
        assert_eq!(lines[4], "mode,multiplicity,lambda,omega");
        assert!(lines[5].starts_with("0+,1,"));
        assert!(lines[9].starts_with("2,9,"));
        // The rendered map is complete and deterministic.
        let rendered = archive.render().unwrap();
        assert_eq!(
            rendered.keys().copied().collect::<Vec<_>>(),
            {
                let mut names = crate::archive::ARCHIVE_FILES.to_vec();
                names.sort_unstable();
                names
            }
        );
        let again = run_pipeline(&config).unwrap().render().unwrap();
        assert_eq!(rendered, again);
    }

    #[test]
    fn small_n_is_rejected_with_the_sector_bound() {
        let config = RunConfig::new(3, ModelSource::Builtin("harmonic-harmonic".into()));
        let err = run_pipeline(&config).unwrap_err();
        assert!(err.to_string().contains("requires N >= 4"), "{err}");
    }

    #[test]
    fn synthetic_default_gives_unit_frequencies_and_no_correction() {
        let config = RunConfig::new(5, ModelSource::Builtin("synthetic".into()));
        let archive = run_pipeline(&config).unwrap();
        for (_, w) in &archive.tau.omega {
            assert!((w - 1.0).abs() < 1e-12);
        }
        assert!(archive.delta1.delta1_cubic.is_empty());
        assert!(archive.delta1.delta1_linear.is_empty());
        assert_eq!(archive.delta1.energy1, 0.0);
    }
}
