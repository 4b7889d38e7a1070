use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::TrainMeta;
use super::{
    prepare, Arch, CnnInput, CnnSpec, Prepared, EMBED_DIM, ENTROPY_CONVS, ENTROPY_HIDDEN, IMAGE_CONVS, IMAGE_HIDDEN,
    NGRAM_FILTERS, NGRAM_WIDTHS,
};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::feature::FeatureBlock;
use crate::tensor::{softmax, Init, ParamId, ParamStore, Tape, Var};

pub const CNN_MAGIC: &[u8; 8] = b"MFCNNMDL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layout {
    Image {
        convs: [Conv; 3],
        norms: [Norm; 3],
        hidden: Conv,
        out: Conv,
    },
    Entropy {
        convs: [Conv; 3],
        hidden: [Conv; 2],
        out: Conv,
    },
    Ngram {
        embed: ParamId,
        convs: [Conv; 3],
        out: Conv,
    },
}

fn conv(store: &mut ParamStore, name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Conv {
    let cout = *shape.last().expect("shape");
    Conv {
        w: store.add(&format!("{name}.w"), shape, Init::HeUniform { fan_in }, rng),
        b: store.add(&format!("{name}.b"), &[cout], Init::Zeros, rng),
    }
}

fn norm(store: &mut ParamStore, name: &str, c: usize, rng: &mut ChaCha8Rng) -> Norm {
    Norm {
        gain: store.add(&format!("{name}.gain"), &[c], Init::Ones, rng),
        bias: store.add(&format!("{name}.bias"), &[c], Init::Zeros, rng),
    }
}

/// Fresh parameters: He-uniform weights, zero biases, unit norm gains,
/// U(-1, 1) embeddings.
pub(crate) fn init_params(spec: &CnnSpec, seed: u64) -> (ParamStore, Layout) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    let c = spec.num_classes;
    let layout = match spec.arch {
        Arch::GrayImage => {
            let mut cin = 1;
            let mut convs = Vec::new();
            let mut norms = Vec::new();
            for (i, &(k, f)) in IMAGE_CONVS.iter().enumerate() {
                convs.push(conv(
                    &mut s,
                    &format!("conv{}", i + 1),
                    &[k, k, cin, f],
                    k * k * cin,
                    &mut rng,
                ));
                norms.push(norm(&mut s, &format!("norm{}", i + 1), f, &mut rng));
                cin = f;
            }
            let flat = spec.flat_dim();
            let hidden = conv(&mut s, "dense", &[flat, IMAGE_HIDDEN], flat, &mut rng);
            let out = conv(&mut s, "output", &[IMAGE_HIDDEN, c], IMAGE_HIDDEN, &mut rng);
            Layout::Image {
                convs: [convs[0], convs[1], convs[2]],
                norms: [norms[0], norms[1], norms[2]],
                hidden,
                out,
            }
        }
        Arch::EntropyStream => {
            let mut cin = 1;
            let mut convs = Vec::new();
            for (i, &f) in ENTROPY_CONVS.iter().enumerate() {
                convs.push(conv(&mut s, &format!("conv{}", i + 1), &[3, cin, f], 3 * cin, &mut rng));
                cin = f;
            }
            let flat = spec.flat_dim();
            let h1 = conv(&mut s, "dense1", &[flat, ENTROPY_HIDDEN[0]], flat, &mut rng);
            let h2 = conv(
                &mut s,
                "dense2",
                &[ENTROPY_HIDDEN[0], ENTROPY_HIDDEN[1]],
                ENTROPY_HIDDEN[0],
                &mut rng,
            );
            let out = conv(&mut s, "output", &[ENTROPY_HIDDEN[1], c], ENTROPY_HIDDEN[1], &mut rng);
            Layout::Entropy {
                convs: [convs[0], convs[1], convs[2]],
                hidden: [h1, h2],
                out,
            }
        }
        Arch::ByteNgram | Arch::OpcodeNgram => {
            let embed = s.add("embed", &[spec.vocab_size + 1, EMBED_DIM], Init::Uniform(1.0), &mut rng);
            let convs: Vec<Conv> = NGRAM_WIDTHS
                .iter()
                .map(|&k| {
                    conv(
                        &mut s,
                        &format!("conv_k{k}"),
                        &[k, EMBED_DIM, NGRAM_FILTERS],
                        k * EMBED_DIM,
                        &mut rng,
                    )
                })
                .collect();
            let feat = NGRAM_WIDTHS.len() * NGRAM_FILTERS;
            let out = conv(&mut s, "output", &[feat, c], feat, &mut rng);
            Layout::Ngram {
                embed,
                convs: [convs[0], convs[1], convs[2]],
                out,
            }
        }
    };
    (s, layout)
}

/// Records the forward pass; returns the feature-layer and logit nodes.
pub(crate) fn forward(tape: &mut Tape<'_>, layout: &Layout, input: &Prepared) -> Result<(Var, Var)> {
    match (layout, input) {
        (
            Layout::Image {
                convs,
                norms,
                hidden,
                out,
            },
            Prepared::Dense(x),
        ) => {
            let mut h = tape.input(x.clone());
            for (c, n) in convs.iter().zip(norms) {
                h = tape.conv2d(h, c.w, c.b)?;
                h = tape.relu(h);
                h = tape.maxpool2d(h, 2)?;
                h = tape.layer_norm(h, n.gain, n.bias)?;
            }
            let h = tape.dense(h, hidden.w, hidden.b)?;
            let feat = tape.relu(h);
            let logits = tape.dense(feat, out.w, out.b)?;
            Ok((feat, logits))
        }
        (Layout::Entropy { convs, hidden, out }, Prepared::Dense(x)) => {
            let mut h = tape.input(x.clone());
            for c in convs {
                h = tape.conv1d(h, c.w, c.b)?;
                h = tape.relu(h);
                h = tape.maxpool1d(h, 2)?;
            }
            let h = tape.dense(h, hidden[0].w, hidden[0].b)?;
            let h = tape.relu(h);
            let h = tape.dense(h, hidden[1].w, hidden[1].b)?;
            let feat = tape.relu(h);
            let logits = tape.dense(feat, out.w, out.b)?;
            Ok((feat, logits))
        }
        (Layout::Ngram { embed, convs, out }, Prepared::Tokens { ids, real }) => {
            let e = tape.embed(ids, *embed)?;
            let mut pooled = Vec::with_capacity(convs.len());
            for (c, &k) in convs.iter().zip(NGRAM_WIDTHS.iter()) {
                let h = tape.conv1d(e, c.w, c.b)?;
                let h = tape.relu(h);
                let windows = ids.len() - k + 1;
                // windows overlapping padding are masked out of the pool
                let valid = if *real >= k { *real - k + 1 } else { windows };
                pooled.push(tape.global_maxpool(h, valid)?);
            }
            let feat = tape.concat(&pooled)?;
            let logits = tape.dense(feat, out.w, out.b)?;
            Ok((feat, logits))
        }
        _ => Err(Error::Validation("input kind does not match the network".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCnn {
    pub spec: CnnSpec,
    pub params: ParamStore,
    pub(crate) layout: Layout,
    pub meta: TrainMeta,
}

impl TrainedCnn {
    /// Untrained network with seeded initial weights.
    pub fn initialize(spec: CnnSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (params, layout) = init_params(&spec, seed);
        Ok(TrainedCnn {
            spec,
            params,
            layout,
            meta: TrainMeta::untrained(seed),
        })
    }

    pub(crate) fn run(&self, input: &Prepared) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new(&self.params);
        let (f, l) = forward(&mut tape, &self.layout, input)?;
        Ok((tape.value(f).data.clone(), softmax(&tape.value(l).data)))
    }

    /// Feature-layer activations.
    pub fn features(&self, input: &CnnInput) -> Result<Vec<f64>> {
        Ok(self.run(&prepare(&self.spec, input)?)?.0)
    }

    pub fn extract_deep_features(&self, input: &CnnInput) -> Result<FeatureBlock> {
        FeatureBlock::new(
            self.spec.arch.category(),
            self.spec.arch.feature_names(),
            self.features(input)?,
        )
    }

    pub fn predict_proba(&self, input: &CnnInput) -> Result<Vec<f64>> {
        Ok(self.run(&prepare(&self.spec, input)?)?.1)
    }

    pub fn to_bytes(&self, provenance: Option<&str>) -> Vec<u8> {
        let mut w = Writer::new(CNN_MAGIC, VERSION);
        w.str(self.spec.arch.as_str());
        w.usize(self.spec.num_classes);
        w.usize(self.spec.input_len);
        w.usize(self.spec.vocab_size);
        w.opt_str(provenance);
        self.meta.write_to(&mut w);
        self.params.write_to(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Option<String>)> {
        let mut r = Reader::open(bytes, CNN_MAGIC, &[VERSION])?;
        let arch: Arch = r.str()?.parse()?;
        let spec = CnnSpec {
            arch,
            num_classes: r.usize()?,
            input_len: r.usize()?,
            vocab_size: r.usize()?,
        };
        spec.validate()?;
        let provenance = r.opt_str()?;
        let meta = TrainMeta::read_from(&mut r)?;
        let params = ParamStore::read_from(&mut r)?;
        r.expect_end()?;
        let (fresh, layout) = init_params(&spec, 0);
        fresh.check_layout(&params)?;
        Ok((
            TrainedCnn {
                spec,
                params,
                layout,
                meta,
            },
            provenance,
        ))
    }
}

pub fn save_cnn(model: &TrainedCnn, path: impl AsRef<Path>, provenance: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_bytes(provenance)).map_err(|e| Error::io(path, e))
}

pub fn load_cnn(path: impl AsRef<Path>) -> Result<(TrainedCnn, Option<String>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TrainedCnn::from_bytes(&bytes)
}
