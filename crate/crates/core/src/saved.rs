//! Trained models on disk: a [`Checkpoint`] whose JSON metadata is a
//! [`ModelSpec`], enough to rebuild the parameter layout before the tensors
//! are copied in.

use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Checkpoint, ParamStore};
use crate::corpus::{LabelSet, Vocabulary};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::si::{BackboneConfig, SiModel, TaggerConfig};
use crate::tc::{TcConfig, TcModel};
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum ModelSpec {
    Si {
        backbone: BackboneConfig,
        tagger: TaggerConfig,
        vocabulary: Vocabulary,
    },
    Tc {
        encoder: EncoderConfig,
        classifier: TcConfig,
        vocabulary: Vocabulary,
        labels: LabelSet,
    },
}

pub enum LoadedModel {
    Si {
        model: SiModel,
        store: ParamStore,
        vocabulary: Vocabulary,
    },
    Tc {
        model: TcModel,
        store: ParamStore,
        vocabulary: Vocabulary,
        labels: LabelSet,
    },
}

impl LoadedModel {
    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            LoadedModel::Si { store, .. } | LoadedModel::Tc { store, .. } => store,
        }
    }

    pub fn task(&self) -> &'static str {
        match self {
            LoadedModel::Si { .. } => "si",
            LoadedModel::Tc { .. } => "tc",
        }
    }
}

impl ModelSpec {
    /// Build the model with freshly initialised parameters.
    pub fn instantiate(&self, rng: &mut SeededRng) -> Result<LoadedModel> {
        let mut store = ParamStore::new();
        Ok(match self {
            ModelSpec::Si {
                backbone,
                tagger,
                vocabulary,
            } => LoadedModel::Si {
                model: SiModel::new(backbone.clone(), tagger.clone(), &mut store, rng)?,
                store,
                vocabulary: vocabulary.clone(),
            },
            ModelSpec::Tc {
                encoder,
                classifier,
                vocabulary,
                labels,
            } => {
                if classifier.labels != labels.len() {
                    return Err(Error::Checkpoint(format!(
                        "classifier has {} outputs for {} labels",
                        classifier.labels,
                        labels.len()
                    )));
                }
                LoadedModel::Tc {
                    model: TcModel::new(encoder.clone(), classifier.clone(), &mut store, rng)?,
                    store,
                    vocabulary: vocabulary.clone(),
                    labels: labels.clone(),
                }
            }
        })
    }
}

pub fn save_model(path: &Path, spec: &ModelSpec, store: &ParamStore) -> Result<()> {
    let meta = serde_json::to_string(spec).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Checkpoint::from_store(meta, store).save(path)
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let ckpt = Checkpoint::load(path)?;
    let spec: ModelSpec =
        serde_json::from_str(&ckpt.meta).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut model = spec.instantiate(&mut SeededRng::seed_from_u64(0))?;
    ckpt.load_into(model.store_mut())?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Article;
    use crate::si::{HeadKind, RecurrentConfig};
    use crate::tc::Pooling;

    fn vocab() -> Vocabulary {
        Vocabulary::build("a b c d".split(' '), 1)
    }

    #[test]
    fn si_round_trip_predicts_identically() {
        let v = vocab();
        let spec = ModelSpec::Si {
            backbone: BackboneConfig::Recurrent(RecurrentConfig {
                vocab_size: v.len(),
                embedding: 4,
                hidden: 3,
            }),
            tagger: TaggerConfig::new(HeadKind::Crf),
            vocabulary: v.clone(),
        };
        let mut rng = SeededRng::seed_from_u64(9);
        let LoadedModel::Si { model, mut store, .. } = spec.instantiate(&mut rng).unwrap() else {
            panic!("wrong task");
        };
        store.randomize(0.5, &mut rng);
        store.round_to_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_model(&path, &spec, &store).unwrap();
        let LoadedModel::Si { model: m2, store: s2, .. } = load_model(&path).unwrap() else {
            panic!("wrong task");
        };
        let article = Article::new("1", "a b c. d a b!");
        assert_eq!(
            model.predict_article(&store, &v, &article).unwrap(),
            m2.predict_article(&s2, &v, &article).unwrap()
        );
    }

    #[test]
    fn tc_spec_rejects_label_mismatch() {
        let v = vocab();
        let mut enc = EncoderConfig::desk(v.len());
        enc.hidden = 8;
        enc.heads = 2;
        let spec = ModelSpec::Tc {
            encoder: enc,
            classifier: TcConfig::new(Pooling::Mean, 3),
            vocabulary: v,
            labels: LabelSet::new(vec!["A".into(), "B".into()]).unwrap(),
        };
        assert!(spec.instantiate(&mut SeededRng::seed_from_u64(0)).is_err());
    }
}
