//! The analysis commands. Each reads and writes artifacts under one run
//! directory, so later stages can be rerun without rebuilding tables.

use std::collections::BTreeMap;
use std::path::Path;

use memreason_core::dataset::{analysis_plan, validate_sample, PlanRole, SampleSpec};
use memreason_core::effects::{
    decompose_effects, effect_ratios, order_strengths, reasoning_order_strengths, records_to_csv,
    verify_additivity, EffectRecord, InteractionTriple, PatternClass,
};
use memreason_core::lattice::{
    reconstruct_all, reflect, subset_mobius_in_place, zeta_and, zeta_or, Family, InteractionVector,
    LatticeDocument, ValueTable,
};
use memreason_core::sparsifier::{
    attach_kappa, extract_salient_pair, matching_error_curve, optimize_theta, salient_at,
    smoothness_check, split_components, MatchingErrorCurve, NoiseVector, SalientSet,
    SparsifyConfig, SparsifyOutcome, SparsityReport, TauPolicy, ThetaVector,
};
use memreason_oracle::{average_value_tables, SyntheticModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layout::{file_safe, read_json, write_json, write_text, RunLayout, MEAN_STEM};
use crate::report::{
    AnalysisReport, Check, MatchingSummary, RunManifest, SparsitySweep, SplitDocument, TableEntry,
    TableRole, TauSummary, VerificationSummary,
};
use crate::scenario::smooth_family;
use crate::source::TableSource;

/// Surrogate sizes for the matching-error curves; the full set is appended.
pub const MATCHING_KS: [usize; 4] = [50, 100, 150, 200];

pub const ADDITIVITY_TOL: f64 = 1e-10;
pub const INVERSION_TOL: f64 = 1e-12;
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

fn in_variant(sample_id: &str, variant_id: &str, e: Error) -> Error {
    Error::Variant {
        sample_id: sample_id.to_string(),
        variant_id: variant_id.to_string(),
        source: Box::new(e),
    }
}

struct Extracted {
    entry: TableEntry,
    table: ValueTable,
    outcome: SparsifyOutcome,
}

/// Builds every value table of the sample's plan plus the equivalence-set
/// mean, learns a split for each and writes tables, interactions, splits and
/// loss curves.
pub fn cmd_extract(
    sample: &SampleSpec,
    source: &TableSource,
    config: &SparsifyConfig,
    out: &Path,
) -> Result<RunManifest> {
    let validation = validate_sample(sample);
    if !validation.is_valid() {
        return Err(memreason_core::Error::InvalidSamples(vec![validation]).into());
    }
    for w in &validation.warnings {
        log::warn!("{}: {w}", sample.sample_id);
    }
    config.validate()?;

    let layout = RunLayout::new(out, &sample.sample_id, source.model_id());
    let mut planned = Vec::new();
    for item in analysis_plan(sample) {
        let id = &item.variant.variant_id;
        log::info!("building value table for {id}");
        let table = source
            .build(item.variant, &sample.target_token)
            .map_err(|e| in_variant(&sample.sample_id, id, e))?;
        let role = match item.role {
            PlanRole::Full => TableRole::Full,
            PlanRole::QuestionOnly => TableRole::QuestionOnly,
            PlanRole::EquivalentMember => TableRole::EquivalentMember,
        };
        let stem = file_safe(id);
        if stem == MEAN_STEM
            || planned
                .iter()
                .any(|(_, s, _): &(TableRole, String, ValueTable)| *s == stem)
        {
            return Err(Error::Usage(format!(
                "variant id {id:?} collides with another artifact name"
            )));
        }
        planned.push((role, stem, table));
    }

    let members: Vec<String> = sample
        .equivalence_set()
        .iter()
        .map(|v| v.variant_id.clone())
        .collect();
    let member_tables: Vec<ValueTable> = members
        .iter()
        .map(|id| {
            planned
                .iter()
                .find(|p| p.2.variant_id() == id)
                .expect("planned")
                .2
                .clone()
        })
        .collect();
    let mean = average_value_tables(&member_tables)?;
    planned.push((TableRole::EquivalenceMean, MEAN_STEM.to_string(), mean));

    // the optimizations are independent and CPU bound
    let results: Vec<Result<Extracted>> = std::thread::scope(|scope| {
        let handles: Vec<_> = planned
            .into_iter()
            .map(|(role, stem, table)| {
                scope.spawn(move || {
                    let outcome = optimize_theta(&table, config)
                        .map_err(|e| in_variant(&sample.sample_id, table.variant_id(), e.into()))?;
                    let entry = TableEntry {
                        variant_id: table.variant_id().to_string(),
                        stem,
                        role,
                        final_loss: outcome.final_loss(),
                        iterations: outcome.loss_history.len().saturating_sub(1),
                        refined: outcome.refined,
                    };
                    Ok(Extracted {
                        entry,
                        table,
                        outcome,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("optimizer thread panicked"))
            .collect()
    });

    let mut entries = Vec::new();
    for extracted in results {
        let Extracted {
            entry,
            table,
            outcome,
        } = extracted?;
        let (and_iv, or_iv) = outcome.interactions(&table)?;
        let stem = &entry.stem;
        write_json(&layout.table(stem), &table.to_document())?;
        write_json(
            &layout.and_effects(stem),
            &and_iv.to_document(&entry.variant_id),
        )?;
        write_json(
            &layout.or_effects(stem),
            &or_iv.to_document(&entry.variant_id),
        )?;
        write_json(
            &layout.split(stem),
            &SplitDocument {
                variant_id: entry.variant_id.clone(),
                theta: outcome.theta.values().to_vec(),
                epsilon: outcome.noise.as_ref().map(|e| e.values().to_vec()),
                noise_bound: outcome.noise.as_ref().map(|e| e.bound()),
            },
        )?;
        write_text(
            &layout.curve(&format!("loss_{stem}.csv")),
            &outcome.loss_csv(),
        )?;
        entries.push(entry);
    }

    let manifest = RunManifest {
        sample_id: sample.sample_id.clone(),
        model_id: source.model_id().to_string(),
        target: sample.target_token.clone(),
        n: sample.n,
        backend: source.backend(),
        masking: source.masking(),
        reduced_fidelity: source.masking().reduces_fidelity(),
        sparsify: config.clone(),
        tables: entries,
        equivalence_members: members,
    };
    write_json(&layout.manifest(), &manifest)?;
    Ok(manifest)
}

/// Stored artifacts of one table.
struct Stored {
    table: ValueTable,
    and_iv: InteractionVector,
    or_iv: InteractionVector,
    theta: ThetaVector,
    noise: Option<NoiseVector>,
}

impl Stored {
    fn load(layout: &RunLayout, stem: &str) -> Result<Self> {
        let path = layout.table(stem);
        let table = ValueTable::from_document(read_json::<LatticeDocument>(&path)?)?;
        let (_, and_iv) = InteractionVector::from_document(read_json(&layout.and_effects(stem))?)?;
        let (_, or_iv) = InteractionVector::from_document(read_json(&layout.or_effects(stem))?)?;
        if and_iv.family() != Family::And || or_iv.family() != Family::Or {
            return Err(memreason_core::Error::Shape(format!(
                "{stem}: interaction files hold the wrong family"
            ))
            .into());
        }
        let split: SplitDocument = read_json(&layout.split(stem))?;
        let theta = ThetaVector::new(split.theta)?;
        let noise = match split.epsilon {
            Some(e) => Some(NoiseVector::new(
                e,
                split.noise_bound.unwrap_or(f64::INFINITY),
            )?),
            None => None,
        };
        Ok(Self {
            table,
            and_iv,
            or_iv,
            theta,
            noise,
        })
    }

    /// Effects recomputed from the stored table and split.
    fn recompute(&self) -> Result<(InteractionVector, InteractionVector)> {
        let split = split_components(&self.table, &self.theta, self.noise.as_ref())?;
        Ok((split.and_effects()?, split.or_effects()?))
    }

    /// Largest gap between stored and recomputed effects.
    fn drift(&self) -> Result<f64> {
        let (a, o) = self.recompute()?;
        Ok(max_gap(a.effects(), self.and_iv.effects())
            .max(max_gap(o.effects(), self.or_iv.effects())))
    }

    fn noise_at(&self, t: usize) -> f64 {
        self.noise.as_ref().map_or(0.0, |e| e.values()[t])
    }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct RunArtifacts {
    layout: RunLayout,
    manifest: RunManifest,
    full: Stored,
    mean: Stored,
    question: Stored,
}

impl RunArtifacts {
    fn load(run_dir: &Path) -> Result<Self> {
        let layout = RunLayout::open(run_dir);
        let manifest: RunManifest = read_json(&layout.manifest())?;
        let stem = |role| {
            manifest
                .stem_of(role)
                .map(str::to_string)
                .ok_or_else(|| Error::Usage(format!("run manifest lists no {role:?} table")))
        };
        let full = Stored::load(&layout, &stem(TableRole::Full)?)?;
        let mean = Stored::load(&layout, &stem(TableRole::EquivalenceMean)?)?;
        let question = Stored::load(&layout, &stem(TableRole::QuestionOnly)?)?;
        Ok(Self {
            layout,
            manifest,
            full,
            mean,
            question,
        })
    }
}

/// Decomposition of one run at a given threshold.
struct Analysis {
    records: Vec<EffectRecord>,
    tau: TauSummary,
    salient: (usize, usize),
    additivity_residual: f64,
    artifact_drift: f64,
    partition_ok: bool,
    curves: Vec<MatchingErrorCurve>,
}

/// Which prompts' salient interactions are decomposed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SalientScope {
    /// Also include interactions salient for the question alone, at the
    /// threshold resolved on the full prompt.
    pub with_question: bool,
}

fn widen(set: SalientSet, other: &InteractionVector) -> SalientSet {
    let extra = salient_at(other, set.tau);
    let mut masks = set.masks;
    masks.extend(extra.masks);
    masks.sort_unstable();
    masks.dedup();
    SalientSet { masks, ..set }
}

fn analyze(run: &RunArtifacts, tau: TauPolicy, scope: SalientScope) -> Result<Analysis> {
    let (full, mean, question) = (&run.full, &run.mean, &run.question);
    let (mut sa, mut so) = extract_salient_pair(&full.and_iv, &full.or_iv, tau)?;
    if scope.with_question {
        sa = widen(sa, &question.and_iv);
        so = widen(so, &question.or_iv);
    }
    let records = decompose_effects(
        InteractionTriple {
            full: &full.and_iv,
            avg: &mean.and_iv,
            question: &question.and_iv,
        },
        InteractionTriple {
            full: &full.or_iv,
            avg: &mean.or_iv,
            question: &question.or_iv,
        },
        &sa,
        &so,
    )?;

    // the components must add up to the effects implied by the full prompt's table
    let (and_ref, or_ref) = full.recompute()?;
    let len = and_ref.effects().len();
    let mut additivity_residual = verify_additivity(&records);
    for r in &records {
        let reference = match r.family {
            Family::And => and_ref.effects()[r.mask as usize],
            Family::Or => or_ref.effects()[r.mask as usize],
        };
        additivity_residual =
            additivity_residual.max((r.j_found + r.j_chaotic + r.k_reason - reference).abs());
    }
    if records.len() != 2 * len {
        additivity_residual = f64::INFINITY;
    }
    let artifact_drift = full.drift()?.max(mean.drift()?).max(question.drift()?);

    let labelled = records
        .iter()
        .filter(|r| r.class_label != PatternClass::Unclassified)
        .count();
    let partition_ok = labelled == sa.len() + so.len()
        && records
            .iter()
            .all(|r| r.salient == (r.class_label != PatternClass::Unclassified));

    let mut ks = MATCHING_KS.to_vec();
    ks.push(2 * len);
    let curves = matching_error_curve(&full.and_iv, &full.or_iv, &full.table, &ks)?;
    Ok(Analysis {
        records,
        tau: TauSummary {
            policy: tau,
            and: sa.tau,
            or: so.tau,
            with_question: scope.with_question,
        },
        salient: (sa.len(), so.len()),
        additivity_residual,
        artifact_drift,
        partition_ok,
        curves,
    })
}

fn matching_summary(curves: &[MatchingErrorCurve]) -> Vec<MatchingSummary> {
    curves
        .iter()
        .map(|c| MatchingSummary {
            k: c.k,
            mean_error: c.mean_error,
            max_error: c.max_error,
        })
        .collect()
}

fn curve_csv(c: &MatchingErrorCurve) -> String {
    let mut s = String::from("rank,mask,value,approx,error\n");
    for i in 0..c.masks.len() {
        s.push_str(&format!(
            "{i},{},{},{},{}\n",
            c.masks[i], c.values[i], c.approx[i], c.errors[i]
        ));
    }
    s
}

/// Decomposes a run into foundational, chaotic and reasoning effects and
/// writes `report.json`, `report.csv` and the plot data under `curves/`.
pub fn cmd_decompose(
    run_dir: &Path,
    tau: TauPolicy,
    scope: SalientScope,
) -> Result<AnalysisReport> {
    let run = RunArtifacts::load(run_dir)?;
    let analysis = analyze(&run, tau, scope)?;
    let records = analysis.records;

    let strengths = order_strengths(&records, true);
    let reasoning = reasoning_order_strengths(&records);
    let ratios = match effect_ratios(&strengths) {
        Ok(r) => Some(r),
        Err(memreason_core::Error::UndefinedRatio) => None,
        Err(e) => return Err(e.into()),
    };
    let mut class_counts = BTreeMap::new();
    for class in [
        PatternClass::Enhanced,
        PatternClass::Eliminated,
        PatternClass::Reversed,
    ] {
        let count = records.iter().filter(|r| r.class_label == class).count();
        class_counts.insert(class.as_str().to_string(), count);
    }

    let mut failures = Vec::new();
    if !(analysis.additivity_residual <= ADDITIVITY_TOL) {
        failures.push(format!(
            "additivity residual {:e} exceeds {ADDITIVITY_TOL:e}",
            analysis.additivity_residual
        ));
    }
    if !(analysis.artifact_drift <= ADDITIVITY_TOL) {
        failures.push(format!(
            "stored interactions differ from their tables by {:e}",
            analysis.artifact_drift
        ));
    }
    if !analysis.partition_ok {
        failures.push("salient masks are not partitioned into reasoning classes".into());
    }

    let layout = &run.layout;
    for c in &analysis.curves {
        write_text(
            &layout.curve(&format!("matching_k{}.csv", c.k)),
            &curve_csv(c),
        )?;
    }
    write_text(&layout.curve("order_strengths.csv"), &strengths.to_csv())?;
    write_text(
        &layout.curve("reasoning_order_strengths.csv"),
        &reasoning.to_csv(),
    )?;
    write_text(&layout.report_csv(), &records_to_csv(&records))?;

    let report = AnalysisReport {
        sample_id: run.manifest.sample_id.clone(),
        model_id: run.manifest.model_id.clone(),
        reduced_fidelity: run.manifest.reduced_fidelity,
        tau: analysis.tau,
        salient_and: analysis.salient.0,
        salient_or: analysis.salient.1,
        class_counts,
        ratios,
        order_strengths: strengths,
        reasoning_strengths: reasoning,
        matching_error: matching_summary(&analysis.curves),
        additivity_residual: analysis.additivity_residual,
        passed: failures.is_empty(),
        failures,
        records,
    };
    write_json(&layout.report_json(), &report)?;
    Ok(report)
}

fn check(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        asserted: true,
        passed: value <= tolerance,
        value,
        tolerance,
        detail: detail.into(),
    }
}

/// `-Σ_{L ⊆ S} (-1)^{|S|-|L|} c(N \ L)` by direct submask enumeration.
fn brute_or_effects(component: &[f64]) -> Vec<f64> {
    let full = component.len() - 1;
    (0..component.len())
        .map(|s| {
            let mut acc = 0.0;
            let mut l = s;
            loop {
                let sign = if (s ^ l).count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                acc += sign * component[full ^ l];
                if l == 0 {
                    break;
                }
                l = (l - 1) & s;
            }
            if s == 0 {
                0.0
            } else {
                -acc
            }
        })
        .collect()
}

/// Runs the invariant suite on a run's artifacts. Problems with the
/// artifacts become failed checks rather than errors.
pub fn cmd_verify(
    run_dir: &Path,
    tau: TauPolicy,
    scope: SalientScope,
) -> Result<VerificationSummary> {
    let layout = RunLayout::open(run_dir);
    let manifest: RunManifest = read_json(&layout.manifest())?;
    let (checks, curves) = match verify_checks(run_dir, &manifest, tau, scope) {
        Ok(found) => found,
        Err(e) => (
            vec![check("artifacts", 1.0, 0.0, e.to_string())],
            Vec::new(),
        ),
    };
    let summary = VerificationSummary {
        sample_id: manifest.sample_id.clone(),
        model_id: manifest.model_id.clone(),
        passed: checks.iter().all(|c| c.passed || !c.asserted),
        checks,
        matching_error: matching_summary(&curves),
    };
    write_json(&layout.verify_json(), &summary)?;
    Ok(summary)
}

fn verify_checks(
    run_dir: &Path,
    manifest: &RunManifest,
    tau: TauPolicy,
    scope: SalientScope,
) -> Result<(Vec<Check>, Vec<MatchingErrorCurve>)> {
    let run = RunArtifacts::load(run_dir)?;
    let layout = &run.layout;
    let mut checks = Vec::new();

    let mut stored = Vec::new();
    for entry in &manifest.tables {
        stored.push((entry, Stored::load(layout, &entry.stem)?));
    }

    let mut inversion = 0.0f64;
    let mut reconstruction = 0.0f64;
    let mut duality = 0.0f64;
    for (_, s) in &stored {
        let split = split_components(&s.table, &s.theta, s.noise.as_ref())?;
        let scale = max_abs(&split.and_table)
            .max(max_abs(&split.or_table))
            .max(1.0);
        let back_and = zeta_and(&s.and_iv)?;
        let back_or = zeta_or(&s.or_iv)?;
        inversion = inversion
            .max(max_gap(&back_and, &split.and_table) / scale)
            .max(max_gap(&back_or, &split.or_table) / scale);

        let mut surrogate = reconstruct_all(&s.and_iv, &s.or_iv, s.table.baseline())?;
        for (t, v) in surrogate.iter_mut().enumerate() {
            *v += s.noise_at(t);
        }
        reconstruction = reconstruction.max(max_gap(&surrogate, s.table.values()));

        let brute = brute_or_effects(&split.or_table);
        let mut reflected = reflect(&split.or_table);
        subset_mobius_in_place(&mut reflected);
        let via_and: Vec<f64> = reflected
            .iter()
            .enumerate()
            .map(|(t, v)| if t == 0 { 0.0 } else { -v })
            .collect();
        duality = duality
            .max(max_gap(&brute, s.or_iv.effects()) / scale)
            .max(max_gap(&via_and, s.or_iv.effects()) / scale);
    }
    checks.push(check(
        "inversion",
        inversion,
        INVERSION_TOL,
        "zeta of stored effects against the component tables, relative",
    ));
    checks.push(check(
        "reconstruction",
        reconstruction,
        RECONSTRUCTION_TOL,
        "all interactions plus noise against every table entry",
    ));
    checks.push(check(
        "duality",
        duality,
        INVERSION_TOL,
        "OR effects against submask enumeration and the reflected AND transform, relative",
    ));

    // any split reproduces the table
    let full = &run.full;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let u_scale = max_abs(&full.table.shifted()).max(1.0);
    let mut independence = 0.0f64;
    for _ in 0..5 {
        let mut theta: Vec<f64> = (0..full.table.values().len())
            .map(|_| rng.random_range(-u_scale..u_scale))
            .collect();
        theta[0] = 0.0;
        let split = split_components(&full.table, &ThetaVector::new(theta)?, None)?;
        let surrogate = reconstruct_all(
            &split.and_effects()?,
            &split.or_effects()?,
            full.table.baseline(),
        )?;
        independence = independence.max(max_gap(&surrogate, full.table.values()));
    }
    checks.push(check(
        "theta_independence",
        independence,
        RECONSTRUCTION_TOL,
        "reconstruction under five random splits of the full prompt",
    ));

    let analysis = analyze(&run, tau, scope)?;
    checks.push(check(
        "additivity",
        analysis.additivity_residual,
        ADDITIVITY_TOL,
        "components against the full prompt's effects",
    ));
    checks.push(check(
        "artifact_consistency",
        analysis.artifact_drift,
        ADDITIVITY_TOL,
        "stored effects against their tables and splits",
    ));
    checks.push(check(
        "partition",
        if analysis.partition_ok { 0.0 } else { 1.0 },
        0.0,
        format!(
            "{} AND and {} OR salient masks",
            analysis.salient.0, analysis.salient.1
        ),
    ));

    let members: Vec<ValueTable> = manifest
        .equivalence_members
        .iter()
        .map(|id| {
            stored
                .iter()
                .find(|(e, _)| &e.variant_id == id)
                .map(|(_, s)| s.table.clone())
                .ok_or_else(|| Error::Usage(format!("equivalence member {id} has no table")))
        })
        .collect::<Result<_>>()?;
    let mut expected = vec![0.0; full.table.values().len()];
    for m in &members {
        for (e, v) in expected.iter_mut().zip(m.values()) {
            *e += v / members.len() as f64;
        }
    }
    let mean_scale = max_abs(&expected).max(1.0);
    checks.push(check(
        "equivalence_mean",
        max_gap(&expected, run.mean.table.values()) / mean_scale,
        INVERSION_TOL,
        format!(
            "mean table against the average of {} members, relative",
            members.len()
        ),
    ));

    // Σ J^c over every interaction equals the gap between the full-set outputs
    let top = full.table.values().len() - 1;
    let chaotic_sum: f64 = analysis.records.iter().map(|r| r.j_chaotic).sum();
    let shifted = |s: &Stored| s.table.values()[top] - s.table.baseline() - s.noise_at(top);
    checks.push(check(
        "chaotic_sum",
        (chaotic_sum - (shifted(full) - shifted(&run.mean))).abs(),
        ADDITIVITY_TOL,
        "sum of chaotic effects against the full-set output gap",
    ));

    let all = analysis.curves.last().expect("k = all is always computed");
    let mut exact = check(
        "matching_all",
        all.max_error,
        RECONSTRUCTION_TOL,
        "surrogate with every interaction",
    );
    if manifest.sparsify.noise_enabled {
        exact.asserted = false;
        exact
            .detail
            .push_str("; informational, the surrogate omits the noise term");
    }
    checks.push(exact);
    let means: Vec<f64> = analysis.curves.iter().map(|c| c.mean_error).collect();
    let rises = means.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    checks.push(Check {
        asserted: false,
        ..check(
            "matching_monotone",
            rises,
            1e-12,
            "largest increase of mean error between successive k",
        )
    });
    Ok((checks, analysis.curves))
}

/// Synthetic families for the sparsity sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SparsityFamily {
    Smooth,
    /// One planted AND effect over the first half of the words.
    Single,
}

impl SparsityFamily {
    pub fn name(self) -> &'static str {
        match self {
            SparsityFamily::Smooth => "smooth",
            SparsityFamily::Single => "single",
        }
    }

    pub fn model(self, n: usize, seed: u64) -> SyntheticModel {
        match self {
            SparsityFamily::Smooth => smooth_family(n, seed),
            SparsityFamily::Single => {
                SyntheticModel::new(n, 0.0).with_and((1u32 << n.div_ceil(2)) - 1, 1.0)
            }
        }
    }
}

/// Counts salient interactions over a range of `n` and fits κ. Passes when
/// every extraction reproduces its table exactly.
pub fn cmd_sparsity(
    ns: &[usize],
    tau: TauPolicy,
    family: SparsityFamily,
    seed: u64,
    config: &SparsifyConfig,
    out: &Path,
) -> Result<SparsitySweep> {
    tau.validate()?;
    let mut reports = Vec::new();
    let mut smoothness = Vec::new();
    let mut passed = true;
    for &n in ns {
        let table = family
            .model(n, seed)
            .table(&format!("{}_n{n}", family.name()))?;
        let outcome = optimize_theta(&table, config)?;
        let (and_iv, or_iv) = outcome.interactions(&table)?;
        let surrogate = reconstruct_all(&and_iv, &or_iv, table.baseline())?;
        let error = max_gap(&surrogate, table.values());
        if !(error <= RECONSTRUCTION_TOL) {
            log::error!("n = {n}: reconstruction error {error:e}");
            passed = false;
        }
        let report = SparsityReport::new(&and_iv, &or_iv, tau)?;
        let mut csv = String::from("rank,strength\n");
        for (i, s) in report.sorted_strengths.iter().enumerate() {
            csv.push_str(&format!("{i},{s}\n"));
        }
        write_text(
            &out.join(format!("sorted_strength_{}_n{n}.csv", family.name())),
            &csv,
        )?;
        reports.push(report);
        smoothness.push(smoothness_check(&table));
    }
    let kappa = attach_kappa(&mut reports);
    let sweep = SparsitySweep {
        family: family.name().into(),
        seed,
        tau,
        top20_share: reports.iter().map(|r| r.top_share(20)).collect(),
        reports,
        smoothness,
        kappa,
        passed,
    };
    write_json(
        &out.join(format!("sparsity_{}.json", family.name())),
        &sweep,
    )?;
    Ok(sweep)
}

/// Loads a stored report.
pub fn cmd_report(run_dir: &Path) -> Result<AnalysisReport> {
    read_json(&RunLayout::open(run_dir).report_json())
}
