//! Building value tables from a backend, and averaging them over an equivalence set.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use memreason_core::dataset::PromptVariant;
use memreason_core::lattice::{self, ValueTable};

use crate::cache::{cache_key, ProbabilityCache};
use crate::confidence::confidence_from_prob;
use crate::config::{BackendKind, OracleConfig};
use crate::error::{Error, Result};
use crate::remote::RemoteClient;
use crate::synthetic::SyntheticModel;
use crate::wire::{mask_text, MaskingMode, ScoreRequest, ScoreResponse, PLACEHOLDER};

#[derive(Debug)]
enum Backend {
    /// Produces confidences directly; nothing is cached.
    Synthetic(SyntheticModel),
    Replay,
    Remote(RemoteClient),
}

#[derive(Debug)]
pub struct Oracle {
    config: OracleConfig,
    backend: Backend,
    cache: ProbabilityCache,
}

impl Oracle {
    pub fn synthetic(model: SyntheticModel) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            config: OracleConfig::default(),
            backend: Backend::Synthetic(model),
            cache: ProbabilityCache::in_memory(),
        })
    }

    /// Replay or remote backend per `config.backend`. Synthetic configs need a
    /// model and go through [`Oracle::synthetic`].
    pub fn from_config(config: OracleConfig) -> Result<Self> {
        config.validate()?;
        let cache = match &config.cache_path {
            Some(p) => ProbabilityCache::open(p)?,
            None => ProbabilityCache::in_memory(),
        };
        let backend = match config.backend {
            BackendKind::Synthetic => {
                return Err(Error::Config(
                    "a synthetic oracle needs a SyntheticModel".into(),
                ))
            }
            BackendKind::Replay => Backend::Replay,
            BackendKind::Remote => Backend::Remote(RemoteClient::from_config(&config)?),
        };
        Ok(Self {
            config,
            backend,
            cache,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn cache(&self) -> &ProbabilityCache {
        &self.cache
    }

    pub fn kind(&self) -> BackendKind {
        match self.backend {
            Backend::Synthetic(_) => BackendKind::Synthetic,
            Backend::Replay => BackendKind::Replay,
            Backend::Remote(_) => BackendKind::Remote,
        }
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    pub fn build_value_table(&self, variant: &PromptVariant, target: &str) -> Result<ValueTable> {
        build_value_table(self, variant, target)
    }
}

pub fn build_value_table(
    oracle: &Oracle,
    variant: &PromptVariant,
    target: &str,
) -> Result<ValueTable> {
    let n = variant.annotated_spans.len();
    let len = lattice::table_len(n)?;
    if let Backend::Synthetic(model) = &oracle.backend {
        if model.n != n {
            return Err(memreason_core::Error::Alignment(format!(
                "synthetic model has {} variables, variant {} has {n} spans",
                model.n, variant.variant_id
            ))
            .into());
        }
        return model.table(&variant.variant_id);
    }

    let model_id = oracle.model_id();
    let keys: Vec<String> = (0..len as u32)
        .map(|t| cache_key(&variant.variant_id, t, target, model_id))
        .collect::<Result<_>>()?;
    let mut probs: Vec<Option<f64>> = keys.iter().map(|k| oracle.cache.get(k)).collect();

    if let Backend::Remote(client) = &oracle.backend {
        let pending: Vec<u32> = (0..len as u32)
            .filter(|&t| probs[t as usize].is_none())
            .collect();
        if !pending.is_empty() {
            let fetched = fetch(client, oracle, variant, target, n, &pending);
            oracle
                .cache
                .insert_many(fetched.iter().map(|&(t, p)| (keys[t as usize].clone(), p)))?;
            oracle.cache.persist()?;
            for (t, p) in fetched {
                probs[t as usize] = Some(p);
            }
        }
    }

    let missing: Vec<u32> = (0..len as u32)
        .filter(|&t| probs[t as usize].is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::PartialTable {
            variant_id: variant.variant_id.clone(),
            missing,
        });
    }
    let values = probs
        .into_iter()
        .map(|p| confidence_from_prob(p.expect("checked above"), oracle.config.p_clamp))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValueTable::new(variant.variant_id.clone(), values)?)
}

fn request_for(
    variant: &PromptVariant,
    target: &str,
    n: usize,
    mask: u32,
    mode: MaskingMode,
) -> ScoreRequest {
    let masked: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) == 0).collect();
    match mode {
        MaskingMode::Embedding => ScoreRequest {
            variant_id: variant.variant_id.clone(),
            prompt_text: variant.text.clone(),
            annotated_spans: variant
                .annotated_spans
                .iter()
                .map(|&(s, e)| [s, e])
                .collect(),
            masked_indices: masked,
            target_token: target.to_string(),
        },
        MaskingMode::TextPlaceholder => {
            let (text, spans) = mask_text(
                &variant.text,
                &variant.annotated_spans,
                &masked,
                PLACEHOLDER,
            );
            // the text already hides the words; the server must not mask again
            ScoreRequest {
                variant_id: variant.variant_id.clone(),
                prompt_text: text,
                annotated_spans: spans,
                masked_indices: Vec::new(),
                target_token: target.to_string(),
            }
        }
    }
}

/// Scores `pending` masks with up to `parallelism` calls in flight. Masks
/// whose request failed after retries are absent from the result.
fn fetch(
    client: &RemoteClient,
    oracle: &Oracle,
    variant: &PromptVariant,
    target: &str,
    n: usize,
    pending: &[u32],
) -> Vec<(u32, f64)> {
    let cfg = &oracle.config;
    let batches: Vec<&[u32]> = pending.chunks(cfg.batch_size).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(pending.len()));
    let workers = cfg.parallelism.min(batches.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(b) else { break };
                let requests: Vec<ScoreRequest> = batch
                    .iter()
                    .map(|&t| request_for(variant, target, n, t, cfg.masking))
                    .collect();
                let answers: Vec<Result<ScoreResponse, String>> = if requests.len() == 1 {
                    match client.score(&requests[0]) {
                        Ok(r) => vec![Ok(r)],
                        Err(e) => {
                            log::error!("{}: mask {}: {e}", variant.variant_id, batch[0]);
                            continue;
                        }
                    }
                } else {
                    match client.score_batch(&requests) {
                        Ok(items) => items,
                        Err(e) => {
                            log::error!(
                                "{}: batch of {} masks: {e}",
                                variant.variant_id,
                                batch.len()
                            );
                            continue;
                        }
                    }
                };
                let mut got = Vec::with_capacity(batch.len());
                for (&t, answer) in batch.iter().zip(answers) {
                    match answer.and_then(|r| accept(r, &cfg.model_id)) {
                        Ok(p) => got.push((t, p)),
                        Err(e) => log::error!("{}: mask {t}: {e}", variant.variant_id),
                    }
                }
                results.lock().expect("result lock poisoned").extend(got);
            });
        }
    });
    let mut out = results.into_inner().expect("result lock poisoned");
    out.sort_by_key(|&(t, _)| t);
    out
}

fn accept(r: ScoreResponse, model_id: &str) -> Result<f64, String> {
    if !(r.probability > 0.0 && r.probability < 1.0) {
        return Err(format!("probability {} is outside (0, 1)", r.probability));
    }
    if r.model_id != model_id {
        log::warn!(
            "server reports model {:?}, caching under {model_id:?}",
            r.model_id
        );
    }
    if !r.token_matched {
        log::warn!("target is not a single token for model {:?}", r.model_id);
    }
    Ok(r.probability)
}

/// Entry-wise mean of tables over the same lattice. The result's variant id
/// is `mean(a,b,...)`.
pub fn average_value_tables(tables: &[ValueTable]) -> Result<ValueTable> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Data("cannot average zero value tables".into()))?;
    let n = first.n();
    // offsets from the first table, so identical tables average to it exactly
    let mut sum = vec![0.0; first.values().len()];
    for t in tables {
        if t.n() != n {
            return Err(memreason_core::Error::Alignment(format!(
                "table {} has {} variables, {} has {n}",
                t.variant_id(),
                t.n(),
                first.variant_id()
            ))
            .into());
        }
        for ((s, v), f) in sum.iter_mut().zip(t.values()).zip(first.values()) {
            *s += v - f;
        }
    }
    let k = tables.len() as f64;
    for (s, f) in sum.iter_mut().zip(first.values()) {
        *s = f + *s / k;
    }
    let ids: Vec<&str> = tables.iter().map(|t| t.variant_id()).collect();
    Ok(ValueTable::new(format!("mean({})", ids.join(",")), sum)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use memreason_core::dataset::EquivalenceType;

    #[test]
    fn requests_mask_the_complement() {
        let v = PromptVariant::new(
            "v",
            EquivalenceType::Original,
            "Emily is a nurse",
            vec![(0, 5), (9, 10), (11, 16)],
        );
        let r = request_for(&v, "x", 3, 0b010, MaskingMode::Embedding);
        assert_eq!(r.masked_indices, vec![0, 2]);
        assert_eq!(r.prompt_text, "Emily is a nurse");
        let r = request_for(&v, "x", 3, 0b010, MaskingMode::TextPlaceholder);
        assert_eq!(r.prompt_text, "[MASK] is a [MASK]");
        assert!(r.masked_indices.is_empty());
    }

    #[test]
    fn averaging_examples() {
        let a = ValueTable::new("a", vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let neg = ValueTable::new("b", a.values().iter().map(|v| -v).collect()).unwrap();
        let mean = average_value_tables(&[a.clone(), neg]).unwrap();
        assert!(mean.values().iter().all(|&v| v == 0.0));
        assert_eq!(mean.variant_id(), "mean(a,b)");
        assert_eq!(
            average_value_tables(&[a.clone()]).unwrap().values(),
            a.values()
        );
        let small = ValueTable::new("c", vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            average_value_tables(&[a, small]),
            Err(Error::Core(memreason_core::Error::Alignment(_)))
        ));
        assert!(average_value_tables(&[]).is_err());
    }
}
