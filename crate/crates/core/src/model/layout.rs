use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

use super::{DomainInput, ModelConfig};

/// A named tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn mat<'a>(&self, buf: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &buf[self.range()]).expect("slot shape")
    }

    pub fn mat_mut<'a>(&self, buf: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut buf[self.range()]).expect("slot shape")
    }

    pub fn vec<'a>(&self, buf: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&buf[self.range()])
    }

    pub fn vec_mut<'a>(&self, buf: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut buf[self.range()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlots {
    pub ln1_g: Slot,
    pub ln1_b: Slot,
    pub wqkv: Slot,
    pub bqkv: Slot,
    pub wo: Slot,
    pub bo: Slot,
    pub ln2_g: Slot,
    pub ln2_b: Slot,
    pub w1: Slot,
    pub b1: Slot,
    pub w2: Slot,
    pub b2: Slot,
}

/// Offsets of every tensor in the flat parameter vector, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub t2v_omega: Option<Slot>,
    pub t2v_phi: Option<Slot>,
    pub w_in: Slot,
    pub b_in: Slot,
    pub label_emb: Slot,
    pub query_emb: Slot,
    pub layers: Vec<LayerSlots>,
    pub lnf_g: Slot,
    pub lnf_b: Slot,
    pub w_out: Slot,
    pub b_out: Slot,
    pub total: usize,
}

struct Builder {
    next: usize,
    order: Vec<Slot>,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Slot {
        let s = Slot { name: name.into(), offset: self.next, rows, cols };
        self.next += rows * cols;
        self.order.push(s.clone());
        s
    }
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.embed_dim;
        let f = cfg.ffn_dim;
        let c = cfg.max_classes;
        let mut b = Builder { next: 0, order: Vec::new() };
        let (t2v_omega, t2v_phi) = match cfg.domain_input {
            DomainInput::Time2Vec => (Some(b.add("t2v.omega", 1, cfg.t2v_dim)), Some(b.add("t2v.phi", 1, cfg.t2v_dim))),
            DomainInput::Scalar => (None, None),
        };
        let w_in = b.add("input.w", cfg.input_dim(), d);
        let b_in = b.add("input.b", 1, d);
        let label_emb = b.add("label.emb", c, d);
        let query_emb = b.add("query.emb", 1, d);
        let layers = (0..cfg.num_layers)
            .map(|l| LayerSlots {
                ln1_g: b.add(format!("layer{l}.ln1.g"), 1, d),
                ln1_b: b.add(format!("layer{l}.ln1.b"), 1, d),
                wqkv: b.add(format!("layer{l}.attn.wqkv"), d, 3 * d),
                bqkv: b.add(format!("layer{l}.attn.bqkv"), 1, 3 * d),
                wo: b.add(format!("layer{l}.attn.wo"), d, d),
                bo: b.add(format!("layer{l}.attn.bo"), 1, d),
                ln2_g: b.add(format!("layer{l}.ln2.g"), 1, d),
                ln2_b: b.add(format!("layer{l}.ln2.b"), 1, d),
                w1: b.add(format!("layer{l}.ffn.w1"), d, f),
                b1: b.add(format!("layer{l}.ffn.b1"), 1, f),
                w2: b.add(format!("layer{l}.ffn.w2"), f, d),
                b2: b.add(format!("layer{l}.ffn.b2"), 1, d),
            })
            .collect();
        let lnf_g = b.add("out.ln.g", 1, d);
        let lnf_b = b.add("out.ln.b", 1, d);
        let w_out = b.add("out.w", d, c);
        let b_out = b.add("out.b", 1, c);
        Self { t2v_omega, t2v_phi, w_in, b_in, label_emb, query_emb, layers, lnf_g, lnf_b, w_out, b_out, total: b.next }
    }

    /// All slots in buffer order.
    pub fn slots(&self) -> Vec<&Slot> {
        let mut out: Vec<&Slot> = Vec::new();
        out.extend(self.t2v_omega.iter());
        out.extend(self.t2v_phi.iter());
        out.extend([&self.w_in, &self.b_in, &self.label_emb, &self.query_emb]);
        for l in &self.layers {
            out.extend([
                &l.ln1_g, &l.ln1_b, &l.wqkv, &l.bqkv, &l.wo, &l.bo, &l.ln2_g, &l.ln2_b, &l.w1, &l.b1, &l.w2, &l.b2,
            ]);
        }
        out.extend([&self.lnf_g, &self.lnf_b, &self.w_out, &self.b_out]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_tile_the_buffer() {
        let cfg = ModelConfig { embed_dim: 8, num_layers: 2, num_heads: 2, ffn_dim: 16, ..Default::default() };
        let layout = ParamLayout::new(&cfg);
        let mut next = 0;
        for s in layout.slots() {
            assert_eq!(s.offset, next, "{}", s.name);
            next += s.len();
        }
        assert_eq!(next, layout.total);
    }
}
