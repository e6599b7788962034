//! Bidirectional LSTM over its own trained token embeddings, used by the
//! recurrent baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Init, Linear, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentConfig {
    pub vocab_size: usize,
    pub embedding: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
struct LstmCell {
    input: Linear,
    recurrent: ParamId,
}

impl LstmCell {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input: Linear::new(store, &format!("{name}.input"), input, 4 * hidden, rng),
            recurrent: store.add(format!("{name}.recurrent"), &[hidden, 4 * hidden], Init::Normal(0.02), rng),
        }
    }

    /// Hidden states `[T, hidden]` read in the given order of rows.
    fn run(&self, tape: &mut Tape, store: &ParamStore, x: Var, order: &[usize], hidden: usize) -> Result<Vec<Var>> {
        let projected = self.input.forward(tape, store, x)?;
        let wh = tape.param(store, self.recurrent);
        let mut h = tape.constant(&[1, hidden], vec![0.0; hidden])?;
        let mut c = tape.constant(&[1, hidden], vec![0.0; hidden])?;
        let mut out = vec![h; order.len()];
        for &t in order {
            let xt = tape.slice_rows(projected, t, t + 1)?;
            let rec = tape.matmul(h, wh)?;
            let z = tape.add(xt, rec)?;
            let zi = tape.slice_cols(z, 0, hidden)?;
            let zf = tape.slice_cols(z, hidden, 2 * hidden)?;
            let zg = tape.slice_cols(z, 2 * hidden, 3 * hidden)?;
            let zo = tape.slice_cols(z, 3 * hidden, 4 * hidden)?;
            let i = tape.sigmoid(zi);
            let f = tape.sigmoid(zf);
            let g = tape.tanh(zg);
            let o = tape.sigmoid(zo);
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            c = tape.add(keep, write)?;
            let squashed = tape.tanh(c);
            h = tape.mul(o, squashed)?;
            out[t] = h;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct BiLstm {
    pub config: RecurrentConfig,
    embedding: ParamId,
    forward: LstmCell,
    backward: LstmCell,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(config: RecurrentConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        if config.embedding == 0 || config.hidden == 0 || config.vocab_size == 0 {
            return Err(Error::contract("recurrent sizes must be positive"));
        }
        let embedding = store.add(
            "recurrent.embedding",
            &[config.vocab_size, config.embedding],
            Init::Normal(0.1),
            rng,
        );
        let forward = LstmCell::new(store, "recurrent.forward", config.embedding, config.hidden, rng);
        let backward = LstmCell::new(store, "recurrent.backward", config.embedding, config.hidden, rng);
        Ok(Self {
            config,
            embedding,
            forward,
            backward,
        })
    }

    /// Output width: forward and backward states side by side.
    pub fn output_dim(&self) -> usize {
        2 * self.config.hidden
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        let table = tape.param(store, self.embedding);
        let x = tape.embedding(table, ids)?;
        let n = self.config.hidden;
        let order: Vec<usize> = (0..ids.len()).collect();
        let reversed: Vec<usize> = order.iter().rev().copied().collect();
        let fwd = self.forward.run(tape, store, x, &order, n)?;
        let bwd = self.backward.run(tape, store, x, &reversed, n)?;
        let rows = fwd
            .into_iter()
            .zip(bwd)
            .map(|(f, b)| tape.concat_cols(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
        tape.concat_rows(&rows)
    }
}
