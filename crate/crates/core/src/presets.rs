//! Named model configurations.
//!
//! | name                | task | model                                              |
//! |---------------------|------|----------------------------------------------------|
//! | `bilstm-baseline`   | SI   | BiLSTM + linear head, fill postprocessing          |
//! | `linear`            | SI   | encoder + independent linear head                  |
//! | `crf`               | SI   | encoder + linear-chain CRF                         |
//! | `lasertagger`       | SI   | encoder + decoder, always teacher-forced           |
//! | `lasertagger-tf`    | SI   | decoder with teacher forcing decayed 1 to 0        |
//! | `lasertagger-tf-ls` | SI   | as above plus label smoothing 0.1                  |
//! | `tc-cls`            | TC   | classifier token only                              |
//! | `tc-rbert`          | TC   | classifier token + mean-pooled span                |
//! | `tc-rbert-w`        | TC   | classifier token + weighted span pooling           |
//! | `tc-rbert-ft`       | TC   | `tc-rbert` after masked-LM finetuning              |
//! | `tc-rbert-w-ft`     | TC   | `tc-rbert-w` after masked-LM finetuning            |

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, MlmOptions};
use crate::si::recurrent::RecurrentConfig;
use crate::si::{BackboneConfig, HeadKind, SiTrainOptions, TaggerConfig, TeacherForcing};
use crate::tc::{Pooling, TcConfig, TcTrainOptions};

pub const PRESET_NAMES: [&str; 11] = [
    "bilstm-baseline",
    "linear",
    "crf",
    "lasertagger",
    "lasertagger-tf",
    "lasertagger-tf-ls",
    "tc-cls",
    "tc-rbert",
    "tc-rbert-w",
    "tc-rbert-ft",
    "tc-rbert-w-ft",
];

/// The TC presets that make up the default ensemble.
pub const TC_ENSEMBLE: [&str; 5] = ["tc-cls", "tc-rbert", "tc-rbert-w", "tc-rbert-ft", "tc-rbert-w-ft"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Transformer,
    Recurrent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiPreset {
    pub backbone: BackboneKind,
    pub tagger: TaggerConfig,
    pub train: SiTrainOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcPreset {
    pub pooling: Pooling,
    pub train: TcTrainOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Preset {
    Si(SiPreset),
    Tc(TcPreset),
}

impl Preset {
    pub fn task(&self) -> &'static str {
        match self {
            Preset::Si(_) => "si",
            Preset::Tc(_) => "tc",
        }
    }
}

impl SiPreset {
    pub fn backbone_config(&self, vocab_size: usize) -> BackboneConfig {
        match self.backbone {
            BackboneKind::Transformer => BackboneConfig::Transformer(EncoderConfig::desk(vocab_size)),
            BackboneKind::Recurrent => BackboneConfig::Recurrent(RecurrentConfig {
                vocab_size,
                embedding: 64,
                hidden: 64,
            }),
        }
    }
}

impl TcPreset {
    pub fn classifier(&self, labels: usize) -> TcConfig {
        TcConfig::new(self.pooling, labels)
    }
}

fn si(backbone: BackboneKind, head: HeadKind, edit: impl FnOnce(&mut TaggerConfig)) -> Preset {
    let mut tagger = TaggerConfig::new(head);
    edit(&mut tagger);
    Preset::Si(SiPreset {
        backbone,
        tagger,
        train: SiTrainOptions::default(),
    })
}

fn tc(pooling: Pooling, finetune: bool) -> Preset {
    Preset::Tc(TcPreset {
        pooling,
        train: TcTrainOptions {
            finetune: finetune.then(MlmOptions::default),
            ..TcTrainOptions::default()
        },
    })
}

pub fn preset(name: &str) -> Option<Preset> {
    use BackboneKind::{Recurrent, Transformer};
    Some(match name {
        "bilstm-baseline" => {
            let mut p = si(Recurrent, HeadKind::Linear, |t| t.postprocess = true);
            if let Preset::Si(s) = &mut p {
                s.train.learning_rate = 1e-3;
            }
            p
        }
        "linear" => si(Transformer, HeadKind::Linear, |_| {}),
        "crf" => si(Transformer, HeadKind::Crf, |_| {}),
        "lasertagger" => si(Transformer, HeadKind::LaserTagger, |t| t.teacher_forcing = TeacherForcing::FORCED),
        "lasertagger-tf" => si(Transformer, HeadKind::LaserTagger, |_| {}),
        "lasertagger-tf-ls" => si(Transformer, HeadKind::LaserTagger, |t| t.label_smoothing = 0.1),
        "tc-cls" => tc(Pooling::Cls, false),
        "tc-rbert" => tc(Pooling::Mean, false),
        "tc-rbert-w" => tc(Pooling::Weighted, false),
        "tc-rbert-ft" => tc(Pooling::Mean, true),
        "tc-rbert-w-ft" => tc(Pooling::Weighted, true),
        _ => return None,
    })
}
