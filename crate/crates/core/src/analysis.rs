//! Measurements over activation sets: per-layer cosine similarity between two
//! checkpoints, variance ranking of SAE features, and per-token feature
//! activations.
//!
//! Pooling is two-stage. A sample's vector is the mean of its token rows
//! (special tokens included), and a dataset's representative vector is the
//! mean of its sample vectors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use crate::actstore::{ActivationSet, SaeModelFile};
use crate::error::{Error, Result};
use crate::numkit::{self, Matrix};
use crate::report::{fmt_sig9, round_sig9};
use crate::sae;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityProfile {
    pub model_tag: String,
    pub dataset_tag: String,
    /// `(layer_index, cosine)`, layers strictly increasing.
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    /// `(feature_index, variance)`, variance non-increasing, ties by index.
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenActivationReport {
    pub sample_index: usize,
    pub feature_index: usize,
    pub tokens: Vec<String>,
    #[serde(serialize_with = "sig9_list")]
    pub activations: Vec<f32>,
}

fn sig9_list<S: Serializer>(values: &[f32], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(values.iter().map(|&v| round_sig9(v as f64)))
}

/// Mean of one sample's token rows.
pub fn pool_sample(set: &ActivationSet, sample_index: usize) -> Result<Vec<f32>> {
    if set.is_pooled() {
        return Err(Error::AlreadyPooled);
    }
    let rows = set.sample_rows(sample_index)?;
    let m = set.data().slice_rows(rows.start, rows.end);
    Ok(numkit::rowwise_mean(&m)?.into_data())
}

/// One row per sample: the data itself when pooled, token means otherwise.
pub fn pooled_matrix(set: &ActivationSet) -> Result<Matrix> {
    if set.is_pooled() {
        return Ok(set.data().clone());
    }
    let d = set.hidden_dim();
    let mut data = Vec::with_capacity(set.sample_count() * d);
    for i in 0..set.sample_count() {
        data.extend(pool_sample(set, i)?);
    }
    Matrix::from_vec(set.sample_count(), d, data)
}

pub fn dataset_representative(set: &ActivationSet) -> Result<Vec<f32>> {
    if set.sample_count() == 0 {
        return Err(Error::Validation("activation set has no samples".into()));
    }
    Ok(numkit::rowwise_mean(&pooled_matrix(set)?)?.into_data())
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(
            "cosine_similarity",
            format!("lengths {} and {}", u.len(), v.len()),
        ));
    }
    let nu = numkit::dot(u, u).sqrt();
    let nv = numkit::dot(v, v).sqrt();
    for norm in [nu, nv] {
        if norm.is_nan() || norm < 1e-12 {
            return Err(Error::Degenerate { norm });
        }
    }
    Ok((numkit::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn index_by_layer<'a>(
    sets: &'a [ActivationSet],
    side: &str,
) -> Result<BTreeMap<usize, &'a ActivationSet>> {
    let mut map = BTreeMap::new();
    for s in sets {
        if map.insert(s.layer_index(), s).is_some() {
            return Err(Error::Pairing(format!(
                "{side} sets repeat layer {}",
                s.layer_index()
            )));
        }
    }
    Ok(map)
}

/// Cosine between the representative vectors of each layer before and after
/// fine-tuning, ordered by layer.
pub fn similarity_profile(
    pre_sets: &[ActivationSet],
    post_sets: &[ActivationSet],
) -> Result<SimilarityProfile> {
    if pre_sets.is_empty() || post_sets.is_empty() {
        return Err(Error::Pairing("no layers to compare".into()));
    }
    let pre = index_by_layer(pre_sets, "pre")?;
    let post = index_by_layer(post_sets, "post")?;
    if !pre.keys().eq(post.keys()) {
        return Err(Error::Pairing(format!(
            "pre layers {:?} differ from post layers {:?}",
            pre.keys().collect::<Vec<_>>(),
            post.keys().collect::<Vec<_>>()
        )));
    }
    let first = pre_sets[0].clone();
    for s in pre_sets.iter().chain(post_sets) {
        if s.dataset_tag != first.dataset_tag {
            return Err(Error::Provenance(format!(
                "dataset '{}' vs '{}'",
                s.dataset_tag, first.dataset_tag
            )));
        }
        if s.hidden_dim() != first.hidden_dim() {
            return Err(Error::shape(
                "similarity_profile",
                format!("hidden_dim {} vs {}", s.hidden_dim(), first.hidden_dim()),
            ));
        }
    }
    let entries = pre
        .iter()
        .map(|(&layer, a)| {
            let u = dataset_representative(a)?;
            let v = dataset_representative(post[&layer])?;
            Ok((layer, cosine_similarity(&u, &v)?))
        })
        .collect::<Result<_>>()?;
    Ok(SimilarityProfile {
        model_tag: first.model_tag,
        dataset_tag: first.dataset_tag,
        entries,
    })
}

/// Unbiased variance, across samples, of each SAE feature on the pooled
/// sample vectors.
pub fn feature_variances(model: &SaeModelFile, set: &ActivationSet) -> Result<Vec<f64>> {
    if set.hidden_dim() != model.input_dim() {
        return Err(Error::shape(
            "feature_variances",
            format!(
                "activations have dim {}, model expects {}",
                set.hidden_dim(),
                model.input_dim()
            ),
        ));
    }
    let s = set.sample_count();
    if s < 2 {
        return Err(Error::InsufficientSamples(s));
    }
    let codes = sae::encode(&model.params, &pooled_matrix(set)?)?;
    // Welford, one pass over samples
    let m = model.hidden_dim();
    let mut mean = vec![0.0f64; m];
    let mut m2 = vec![0.0f64; m];
    for (k, row) in codes.matrix().row_iter().enumerate() {
        let n = (k + 1) as f64;
        for ((mu, acc), &h) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
            let delta = h as f64 - *mu;
            *mu += delta / n;
            *acc += delta * (h as f64 - *mu);
        }
    }
    Ok(m2.into_iter().map(|v| v / (s - 1) as f64).collect())
}

/// The `n` most variable features, highest first.
pub fn top_variable_features(variances: &[f64], n: usize) -> Result<FeatureRanking> {
    if n < 1 || n > variances.len() {
        return Err(Error::Range(format!(
            "top-n must be in 1..={}, got {n}",
            variances.len()
        )));
    }
    let mut idx: Vec<usize> = (0..variances.len()).collect();
    idx.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
    Ok(FeatureRanking {
        entries: idx.into_iter().take(n).map(|i| (i, variances[i])).collect(),
    })
}

/// Value of one SAE feature at every token of one sample.
pub fn token_feature_activations(
    model: &SaeModelFile,
    set: &ActivationSet,
    sample_index: usize,
    feature_index: usize,
) -> Result<TokenActivationReport> {
    if set.is_pooled() {
        return Err(Error::NeedsTokens);
    }
    let tokens = set.tokens().ok_or(Error::MissingTokens)?;
    if set.hidden_dim() != model.input_dim() {
        return Err(Error::shape(
            "token_feature_activations",
            format!(
                "activations have dim {}, model expects {}",
                set.hidden_dim(),
                model.input_dim()
            ),
        ));
    }
    if feature_index >= model.hidden_dim() {
        return Err(Error::Index {
            what: "feature",
            index: feature_index,
            len: model.hidden_dim(),
        });
    }
    let rows = set.sample_rows(sample_index)?;
    let x = set.data().slice_rows(rows.start, rows.end);
    let h = sae::encode(&model.params, &x)?;
    let activations = h
        .matrix()
        .row_iter()
        .map(|row| row[feature_index])
        .collect();
    Ok(TokenActivationReport {
        sample_index,
        feature_index,
        tokens: tokens[sample_index].clone(),
        activations,
    })
}

pub fn profile_csv(profile: &SimilarityProfile) -> String {
    let mut out = String::from("layer,cosine\n");
    for &(layer, c) in &profile.entries {
        out.push_str(&format!("{layer},{}\n", fmt_sig9(c)));
    }
    out
}

/// `rank,feature_index,variance`, ranks starting at 1.
pub fn ranking_csv(ranking: &FeatureRanking) -> String {
    let mut out = String::from("rank,feature_index,variance\n");
    for (r, &(f, v)) in ranking.entries.iter().enumerate() {
        out.push_str(&format!("{},{f},{}\n", r + 1, fmt_sig9(v)));
    }
    out
}

pub fn report_json(report: &TokenActivationReport) -> String {
    let mut s = serde_json::to_string(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report_json(text: &str) -> Result<TokenActivationReport> {
    let r: TokenActivationReport = serde_json::from_str(text)
        .map_err(|e| Error::Validation(format!("token report JSON: {e}")))?;
    if r.tokens.len() != r.activations.len() {
        return Err(Error::Validation("token report lengths differ".into()));
    }
    Ok(r)
}
