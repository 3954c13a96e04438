use super::field::{Field, Kind};
use crate::error::{Error, Result};

/// `B = [[B1, B2], [B3, b]]` with `B1` of order `n - 1`, `B2` the last
/// column above the corner, `B3` the last row left of the corner.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub b1: Field,
    pub b2: Field,
    pub b3: Field,
    pub b: Field,
}

pub fn block_decompose(m: &Field) -> Result<BlockDecomposition> {
    let dim = match m.kind() {
        Kind::Matrix(d) if d >= 2 => d,
        k => return Err(Error::Shape(format!("block_decompose expects a matrix field, got {k:?}"))),
    };
    let k = dim - 1;
    let name = m.name();
    let b1 = m.map_nodes(Kind::Matrix(k), format!("{name}.B1"), |_, v, out| {
        for r in 0..k {
            out[r * k..(r + 1) * k].copy_from_slice(&v[r * dim..r * dim + k]);
        }
    })?;
    let b2 = m.map_nodes(Kind::Vector(k), format!("{name}.B2"), |_, v, out| {
        for r in 0..k {
            out[r] = v[r * dim + k];
        }
    })?;
    let b3 = m.map_nodes(Kind::Vector(k), format!("{name}.B3"), |_, v, out| {
        out.copy_from_slice(&v[k * dim..k * dim + k]);
    })?;
    let b = m.map_nodes(Kind::Scalar, format!("{name}.b"), |_, v, out| {
        out[0] = v[dim * dim - 1];
    })?;
    Ok(BlockDecomposition { b1, b2, b3, b })
}

impl BlockDecomposition {
    pub fn reassemble(&self, name: impl Into<String>) -> Result<Field> {
        let k = match self.b1.kind() {
            Kind::Matrix(k) => k,
            _ => return Err(Error::Shape("B1 must be a matrix field".into())),
        };
        let dim = k + 1;
        let grid = *self.b1.grid();
        let mut values = vec![0.0; grid.node_count() * dim * dim];
        for (node, out) in values.chunks_mut(dim * dim).enumerate() {
            let (b1, b2, b3) = (self.b1.at(node), self.b2.at(node), self.b3.at(node));
            for r in 0..k {
                out[r * dim..r * dim + k].copy_from_slice(&b1[r * k..(r + 1) * k]);
                out[r * dim + k] = b2[r];
            }
            out[k * dim..k * dim + k].copy_from_slice(b3);
            out[dim * dim - 1] = self.b.scalar(node);
        }
        Field::new(grid, Kind::Matrix(dim), name, values)
    }
}
