//! Training loops: symmetric-InfoNCE contrastive alignment and the
//! supervised-only variant used by the no-text ablation.
//!
//! Both are single-threaded over the optimizer state and fully determined by
//! `TrainConfig::seed`: one ChaCha stream drives weight init, epoch shuffles,
//! and dropout masks, in that order. Trailing pairs that do not fill a batch
//! are skipped for the epoch (each epoch reshuffles, so coverage rotates).

#[allow(unused_imports)] // no_std builds need the trait; std test builds shadow it with inherent methods
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Segment;

use super::head::HeadGrads;
use super::loss::info_nce_loss;
use super::mat::Mat;
use super::optim::{AdamW, TensorRef};
use super::tokenizer::Vocab;
use super::{
    eeg_features, eeg_features_backward, normalize_rows, normalize_rows_backward, text_features,
    AlignError, EegCache, EncoderConfig, EncoderParams, TrainConfig, TAU_MAX, TAU_MIN,
};

/// Final parameters plus the per-batch loss trajectory.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub batch_losses: Vec<f64>,
}

struct Grads {
    temporal: Vec<f64>,
    spatial: Vec<f64>,
    eeg: HeadGrads,
    table: Vec<f64>,
    text: HeadGrads,
    log_tau: [f64; 1],
}

impl Grads {
    fn zero(p: &EncoderParams) -> Self {
        Grads {
            temporal: vec![0.0; p.temporal.len()],
            spatial: vec![0.0; p.spatial.len()],
            eeg: p.eeg_proj.zero_grads(),
            table: vec![0.0; p.token_table.len()],
            text: p.text_proj.zero_grads(),
            log_tau: [0.0],
        }
    }
}

fn contrastive_tensors(p: &mut EncoderParams) -> Vec<TensorRef<'_>> {
    let mut t = eeg_tensors(&mut p.temporal, &mut p.spatial, &mut p.eeg_proj);
    t.push(TensorRef {
        data: &mut p.token_table,
        decay: true,
    });
    t.extend(head_tensors(&mut p.text_proj));
    t.push(TensorRef {
        data: core::slice::from_mut(&mut p.log_tau),
        decay: false,
    });
    t
}

fn eeg_tensors<'a>(
    temporal: &'a mut [f64],
    spatial: &'a mut [f64],
    head: &'a mut super::ProjectionHead,
) -> Vec<TensorRef<'a>> {
    let mut t = vec![
        TensorRef {
            data: temporal,
            decay: true,
        },
        TensorRef {
            data: spatial,
            decay: true,
        },
    ];
    t.extend(head_tensors(head));
    t
}

fn head_tensors(h: &mut super::ProjectionHead) -> Vec<TensorRef<'_>> {
    vec![
        TensorRef {
            data: &mut h.w1,
            decay: true,
        },
        TensorRef {
            data: &mut h.b1,
            decay: false,
        },
        TensorRef {
            data: &mut h.gamma,
            decay: false,
        },
        TensorRef {
            data: &mut h.beta,
            decay: false,
        },
        TensorRef {
            data: &mut h.w2,
            decay: true,
        },
        TensorRef {
            data: &mut h.b2,
            decay: false,
        },
    ]
}

fn head_grad_refs(g: &HeadGrads) -> [&[f64]; 6] {
    [&g.w1, &g.b1, &g.gamma, &g.beta, &g.w2, &g.b2]
}

fn eeg_forward_batch(
    params: &EncoderParams,
    segments: &[Segment],
    batch: &[usize],
) -> (Mat, Vec<EegCache>) {
    let mut flats = Mat::zeros(batch.len(), params.config.eeg_feature_dim());
    let mut caches = Vec::with_capacity(batch.len());
    for (row, &idx) in batch.iter().enumerate() {
        let (flat, cache) = eeg_features(params, &segments[idx]);
        flats.row_mut(row).copy_from_slice(&flat);
        caches.push(cache);
    }
    (flats, caches)
}

fn check_inputs(
    segments: &[Segment],
    enc: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(), AlignError> {
    cfg.validate()?;
    enc.validate()?;
    if segments.len() < cfg.batch_size {
        return Err(AlignError::NotEnoughPairs {
            have: segments.len(),
            need: cfg.batch_size,
        });
    }
    for seg in segments {
        if seg.channels != enc.channels || seg.samples != enc.samples {
            return Err(AlignError::ShapeMismatch {
                id: seg.id.clone(),
                got_channels: seg.channels,
                got_samples: seg.samples,
                channels: enc.channels,
                samples: enc.samples,
            });
        }
    }
    Ok(())
}

/// Contrastive training over (segment, token sequence) pairs. With
/// `epochs = 0` the returned parameters equal the seeded initialization.
pub fn train(
    segments: &[Segment],
    token_seqs: &[Vec<u32>],
    vocab: Vocab,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutput, AlignError> {
    check_inputs(segments, enc, cfg)?;
    if segments.len() != token_seqs.len() {
        return Err(AlignError::BadBatch {
            z_rows: segments.len(),
            u_rows: token_seqs.len(),
        });
    }
    if token_seqs.iter().any(|t| t.is_empty()) {
        return Err(AlignError::EmptyTokens);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = EncoderParams::init(*enc, vocab, &mut rng)?;
    let mut optimizer = AdamW::new(cfg);
    let mut batch_losses = Vec::new();
    let mut order: Vec<usize> = (0..segments.len()).collect();

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks_exact(cfg.batch_size) {
            let (flats, eeg_caches) = eeg_forward_batch(&params, segments, chunk);
            let (z_pre, eeg_cache) =
                params
                    .eeg_proj
                    .forward_train(flats, params.config.dropout, &mut rng);
            let (z, z_norms) = normalize_rows(&z_pre)?;

            let mut feats = Mat::zeros(chunk.len(), params.config.text_embed_dim);
            for (row, &idx) in chunk.iter().enumerate() {
                let f = text_features(&params, &token_seqs[idx])?;
                feats.row_mut(row).copy_from_slice(&f);
            }
            let (u_pre, text_cache) =
                params
                    .text_proj
                    .forward_train(feats, params.config.dropout, &mut rng);
            let (u, u_norms) = normalize_rows(&u_pre)?;

            let tau = params.tau();
            let nce = info_nce_loss(&z, &u, tau)?;
            if !nce.loss.is_finite() {
                return Err(AlignError::Diverged {
                    batch_index: batch_losses.len(),
                });
            }
            batch_losses.push(nce.loss);

            let mut grads = Grads::zero(&params);
            let d_zpre = normalize_rows_backward(&z, &z_norms, &nce.d_z);
            let d_flats = params.eeg_proj.backward(&eeg_cache, &d_zpre, &mut grads.eeg);
            for (row, &idx) in chunk.iter().enumerate() {
                eeg_features_backward(
                    &params,
                    &segments[idx],
                    &eeg_caches[row],
                    d_flats.row(row),
                    &mut grads.temporal,
                    &mut grads.spatial,
                );
            }

            let d_upre = normalize_rows_backward(&u, &u_norms, &nce.d_u);
            let d_feats = params
                .text_proj
                .backward(&text_cache, &d_upre, &mut grads.text);
            let e = params.config.text_embed_dim;
            for (row, &idx) in chunk.iter().enumerate() {
                let seq = &token_seqs[idx];
                let used = &seq[..seq.len().min(params.config.max_tokens)];
                let inv = 1.0 / used.len() as f64;
                let df = d_feats.row(row);
                for &id in used {
                    let dst = &mut grads.table[id as usize * e..(id as usize + 1) * e];
                    for (d, g) in dst.iter_mut().zip(df) {
                        *d += g * inv;
                    }
                }
            }

            grads.log_tau[0] = nce.d_tau * tau;

            let mut grad_refs: Vec<&[f64]> = vec![&grads.temporal, &grads.spatial];
            grad_refs.extend(head_grad_refs(&grads.eeg));
            grad_refs.push(&grads.table);
            grad_refs.extend(head_grad_refs(&grads.text));
            grad_refs.push(&grads.log_tau);

            optimizer.step(&mut contrastive_tensors(&mut params), &grad_refs);
            params.log_tau = params.log_tau.clamp(TAU_MIN.ln(), TAU_MAX.ln());
        }
    }

    Ok(TrainOutput {
        params,
        batch_losses,
    })
}

/// Supervised-only EEG training: the same encoder topped with a linear
/// classifier and binary cross-entropy on the segment labels. The classifier
/// head is discarded; embeddings come from the usual normalized inference
/// path. The text tower keeps its untouched initialization.
pub fn train_supervised(
    segments: &[Segment],
    enc: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutput, AlignError> {
    check_inputs(segments, enc, cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = EncoderParams::init(*enc, Vocab::empty(), &mut rng)?;
    let mut clf_w = super::head::uniform_fan_in(enc.dim, enc.dim, &mut rng);
    let mut clf_b = [0.0f64];
    let mut optimizer = AdamW::new(cfg);
    let mut batch_losses = Vec::new();
    let mut order: Vec<usize> = (0..segments.len()).collect();

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks_exact(cfg.batch_size) {
            let (flats, eeg_caches) = eeg_forward_batch(&params, segments, chunk);
            let (z_pre, eeg_cache) =
                params
                    .eeg_proj
                    .forward_train(flats, params.config.dropout, &mut rng);

            let m = chunk.len() as f64;
            let mut loss = 0.0;
            let mut d_zpre = Mat::zeros(chunk.len(), params.config.dim);
            let mut grads = Grads::zero(&params);
            let mut d_clf_w = vec![0.0; clf_w.len()];
            let mut d_clf_b = [0.0f64];
            for (row, &idx) in chunk.iter().enumerate() {
                let zi = z_pre.row(row);
                let logit: f64 =
                    clf_w.iter().zip(zi).map(|(w, v)| w * v).sum::<f64>() + clf_b[0];
                let y = segments[idx].label as f64;
                // Numerically stable BCE-with-logit.
                loss += (logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()) / m;
                let p = 1.0 / (1.0 + (-logit).exp());
                let dl = (p - y) / m;
                for (k, (dw, &v)) in d_clf_w.iter_mut().zip(zi).enumerate() {
                    *dw += dl * v;
                    d_zpre.row_mut(row)[k] = dl * clf_w[k];
                }
                d_clf_b[0] += dl;
            }
            if !loss.is_finite() {
                return Err(AlignError::Diverged {
                    batch_index: batch_losses.len(),
                });
            }
            batch_losses.push(loss);

            let d_flats = params.eeg_proj.backward(&eeg_cache, &d_zpre, &mut grads.eeg);
            for (row, &idx) in chunk.iter().enumerate() {
                eeg_features_backward(
                    &params,
                    &segments[idx],
                    &eeg_caches[row],
                    d_flats.row(row),
                    &mut grads.temporal,
                    &mut grads.spatial,
                );
            }

            let mut grad_refs: Vec<&[f64]> = vec![&grads.temporal, &grads.spatial];
            grad_refs.extend(head_grad_refs(&grads.eeg));
            grad_refs.push(&d_clf_w);
            grad_refs.push(&d_clf_b);

            let mut tensors = eeg_tensors(&mut params.temporal, &mut params.spatial, &mut params.eeg_proj);
            tensors.push(TensorRef {
                data: &mut clf_w,
                decay: true,
            });
            tensors.push(TensorRef {
                data: &mut clf_b,
                decay: false,
            });
            optimizer.step(&mut tensors, &grad_refs);
        }
    }

    Ok(TrainOutput {
        params,
        batch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::encode_eeg;
    use crate::align::encode_text;
    use alloc::format;
    use alloc::string::ToString;
    use rand::Rng;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            dim: 8,
            channels: 2,
            samples: 30,
            n_filters: 2,
            kernel_len: 4,
            pool: 2,
            hidden: 8,
            text_embed_dim: 8,
            max_tokens: 8,
            dropout: 0.1,
        }
    }

    /// Two synthetic classes: a slow square wave vs. a fast alternation, plus
    /// per-sample noise, each paired with a class-specific sentence.
    fn paired_corpus(
        n: usize,
        cfg: &EncoderConfig,
        seed: u64,
    ) -> (Vec<Segment>, Vec<Vec<u32>>, Vocab) {
        let texts = [
            "slow rhythmic pattern over both channels",
            "fast alternating transient activity",
        ];
        let vocab = Vocab::build(texts.iter().copied());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut segments = Vec::new();
        let mut seqs = Vec::new();
        for i in 0..n {
            let class = i % 2;
            let data: Vec<f32> = (0..cfg.channels * cfg.samples)
                .map(|j| {
                    let base = if class == 0 {
                        if (j / 8) % 2 == 0 { 1.0 } else { -1.0 }
                    } else if j % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    base + rng.random_range(-0.2f32..0.2)
                })
                .collect();
            segments.push(Segment {
                id: format!("t{i}"),
                subject_id: "syn".to_string(),
                start_s: 0.0,
                channels: cfg.channels,
                samples: cfg.samples,
                data,
                label: class as u8,
            });
            seqs.push(vocab.encode(texts[class]));
        }
        (segments, seqs, vocab)
    }

    fn small_train_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            learning_rate: 3e-3,
            epochs,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = tiny_config();
        let (segments, seqs, vocab) = paired_corpus(16, &cfg, 3);
        let out = train(&segments, &seqs, vocab.clone(), &cfg, &small_train_config(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = EncoderParams::init(cfg, vocab, &mut rng).unwrap();
        assert_eq!(out.params, init);
        assert!(out.batch_losses.is_empty());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let cfg = tiny_config();
        let (segments, seqs, vocab) = paired_corpus(16, &cfg, 3);
        let a = train(&segments, &seqs, vocab.clone(), &cfg, &small_train_config(2)).unwrap();
        let b = train(&segments, &seqs, vocab, &cfg, &small_train_config(2)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.batch_losses, b.batch_losses);
    }

    #[test]
    fn loss_improves_and_pairs_align() {
        let cfg = tiny_config();
        let (segments, seqs, vocab) = paired_corpus(64, &cfg, 3);
        let out = train(&segments, &seqs, vocab, &cfg, &small_train_config(20)).unwrap();
        let first = out.batch_losses[0];
        let last = *out.batch_losses.last().unwrap();
        assert!(
            last < first,
            "loss did not improve: first {first}, last {last}"
        );

        // Held-out pairs from the same generator: matched EEG–text similarity
        // must exceed mismatched similarity on average.
        let (held_segs, held_seqs, _) = paired_corpus(16, &cfg, 99);
        let z: Vec<_> = held_segs
            .iter()
            .map(|s| encode_eeg(&out.params, s).unwrap())
            .collect();
        let u: Vec<_> = held_seqs
            .iter()
            .map(|t| encode_text(&out.params, t).unwrap())
            .collect();
        let mut diag = 0.0;
        let mut off = 0.0;
        let mut off_n = 0;
        for i in 0..z.len() {
            for j in 0..u.len() {
                let s = z[i].dot(&u[j]);
                if i == j {
                    diag += s;
                } else {
                    off += s;
                    off_n += 1;
                }
            }
        }
        diag /= z.len() as f64;
        off /= off_n as f64;
        assert!(diag > off, "diag {diag} not above off-diag {off}");
    }

    #[test]
    fn supervised_training_learns_separable_classes() {
        let cfg = tiny_config();
        let (segments, _, _) = paired_corpus(64, &cfg, 5);
        let out = train_supervised(&segments, &cfg, &small_train_config(20)).unwrap();
        let first = out.batch_losses[0];
        let last = *out.batch_losses.last().unwrap();
        assert!(last < first, "first {first}, last {last}");
    }

    #[test]
    fn rejects_undersized_corpus() {
        let cfg = tiny_config();
        let (segments, seqs, vocab) = paired_corpus(4, &cfg, 3);
        assert!(matches!(
            train(&segments, &seqs, vocab, &cfg, &small_train_config(1)),
            Err(AlignError::NotEnoughPairs { .. })
        ));
    }

    /// Finite-difference check through the full stack (conv, spatial mix,
    /// max-pool, head with batch statistics, normalization, loss) with
    /// dropout disabled. Verifies the composed backward pass, not just the
    /// loss-level gradients.
    #[test]
    fn full_stack_gradients_match_finite_differences() {
        let mut cfg = tiny_config();
        cfg.dropout = 0.0;
        let (segments, seqs, vocab) = paired_corpus(6, &cfg, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = EncoderParams::init(cfg, vocab, &mut rng).unwrap();
        let batch: Vec<usize> = (0..6).collect();

        let loss_of = |p: &EncoderParams| -> f64 {
            let mut p = p.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (flats, _) = eeg_forward_batch(&p, &segments, &batch);
            let (z_pre, _) = p.eeg_proj.forward_train(flats, 0.0, &mut rng);
            let (z, _) = normalize_rows(&z_pre).unwrap();
            let mut feats = Mat::zeros(batch.len(), p.config.text_embed_dim);
            for (row, &idx) in batch.iter().enumerate() {
                let f = text_features(&p, &seqs[idx]).unwrap();
                feats.row_mut(row).copy_from_slice(&f);
            }
            let (u_pre, _) = p.text_proj.forward_train(feats, 0.0, &mut rng);
            let (u, _) = normalize_rows(&u_pre).unwrap();
            info_nce_loss(&z, &u, p.tau()).unwrap().loss
        };

        // Analytic gradients via one full forward/backward.
        let mut p = params.clone();
        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        let (flats, eeg_caches) = eeg_forward_batch(&p, &segments, &batch);
        let (z_pre, eeg_cache) = p.eeg_proj.forward_train(flats, 0.0, &mut rng2);
        let (z, z_norms) = normalize_rows(&z_pre).unwrap();
        let mut feats = Mat::zeros(batch.len(), p.config.text_embed_dim);
        for (row, &idx) in batch.iter().enumerate() {
            let f = text_features(&p, &seqs[idx]).unwrap();
            feats.row_mut(row).copy_from_slice(&f);
        }
        let (u_pre, text_cache) = p.text_proj.forward_train(feats, 0.0, &mut rng2);
        let (u, u_norms) = normalize_rows(&u_pre).unwrap();
        let nce = info_nce_loss(&z, &u, p.tau()).unwrap();
        let mut grads = Grads::zero(&p);
        let d_zpre = normalize_rows_backward(&z, &z_norms, &nce.d_z);
        let d_flats = p.eeg_proj.backward(&eeg_cache, &d_zpre, &mut grads.eeg);
        for (row, &idx) in batch.iter().enumerate() {
            eeg_features_backward(
                &p,
                &segments[idx],
                &eeg_caches[row],
                d_flats.row(row),
                &mut grads.temporal,
                &mut grads.spatial,
            );
        }
        let d_upre = normalize_rows_backward(&u, &u_norms, &nce.d_u);
        let d_feats = p.text_proj.backward(&text_cache, &d_upre, &mut grads.text);
        let e = p.config.text_embed_dim;
        for (row, &idx) in batch.iter().enumerate() {
            let seq = &seqs[idx];
            let used = &seq[..seq.len().min(p.config.max_tokens)];
            let inv = 1.0 / used.len() as f64;
            for &id in used {
                let dst = &mut grads.table[id as usize * e..(id as usize + 1) * e];
                for (d, g) in dst.iter_mut().zip(d_feats.row(row)) {
                    *d += g * inv;
                }
            }
        }

        let eps = 1e-6;
        let checks: &[(&str, fn(&mut EncoderParams) -> &mut [f64], &[f64], usize)] = &[
            ("temporal", |p| &mut p.temporal, &grads.temporal, 3),
            ("spatial", |p| &mut p.spatial, &grads.spatial, 2),
            ("eeg.w1", |p| &mut p.eeg_proj.w1, &grads.eeg.w1, 5),
            ("eeg.gamma", |p| &mut p.eeg_proj.gamma, &grads.eeg.gamma, 1),
            ("eeg.w2", |p| &mut p.eeg_proj.w2, &grads.eeg.w2, 4),
            ("table", |p| &mut p.token_table, &grads.table, 9),
            ("text.w1", |p| &mut p.text_proj.w1, &grads.text.w1, 7),
            ("text.b1", |p| &mut p.text_proj.b1, &grads.text.b1, 2),
        ];
        for &(name, get, analytic, at) in checks {
            let mut plus = params.clone();
            get(&mut plus)[at] += eps;
            let mut minus = params.clone();
            get(&mut minus)[at] -= eps;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            let got = analytic[at];
            let denom = fd.abs().max(got.abs()).max(1e-8);
            assert!(
                ((fd - got) / denom).abs() < 1e-4,
                "{name}[{at}]: fd {fd} vs analytic {got}"
            );
        }
    }
}
