//! Deterministic Huffman coding over byte symbols with weights supplied by
//! the caller (the window byte model).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

const NUM_SYMBOLS: usize = 256;

struct HeapItem {
    weight: f64,
    seq: u32,
    node: u32,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the lightest first;
        // ties broken by creation order for determinism
        other
            .weight
            .partial_cmp(&self.weight)
            .unwrap()
            .then(other.seq.cmp(&self.seq))
    }
}

/// A 256-symbol Huffman code. Codes may be longer than 64 bits for very
/// skewed models, hence the wide storage.
pub struct HuffmanCode {
    codes: Vec<(u128, u8)>,
    children: Vec<[i32; 2]>, // internal nodes; negative = leaf (!index)
    root: i32,
}

impl HuffmanCode {
    /// Builds the code from per-symbol weights (any positive scale; weights
    /// are floored to 1e-18 of the maximum so every symbol stays encodable
    /// and code depth stays far below the 128-bit storage limit).
    pub fn build(weights: &[f64; NUM_SYMBOLS]) -> HuffmanCode {
        let top = weights.iter().copied().fold(0.0f64, f64::max);
        let floor = if top > 0.0 { top * 1e-18 } else { 1.0 };
        let mut heap = BinaryHeap::with_capacity(NUM_SYMBOLS);
        let mut seq = 0u32;
        for (i, &w) in weights.iter().enumerate() {
            heap.push(HeapItem {
                weight: w.max(floor),
                seq,
                node: !(i as u32), // leaves marked by inverted bits
            });
            seq += 1;
        }
        let mut children: Vec<[i32; 2]> = Vec::with_capacity(NUM_SYMBOLS - 1);
        let mut parent: Vec<(i32, u8)> = vec![(0, 0); 2 * NUM_SYMBOLS - 1];
        let node_slot = |node: u32| -> usize {
            if node & 0x8000_0000 != 0 {
                (!node) as usize // leaf i at slot i
            } else {
                NUM_SYMBOLS + node as usize
            }
        };
        let node_code = |node: u32| -> i32 {
            if node & 0x8000_0000 != 0 {
                !((!node) as i32)
            } else {
                node as i32
            }
        };
        while heap.len() > 1 {
            let a = heap.pop().unwrap();
            let b = heap.pop().unwrap();
            let idx = children.len() as u32;
            children.push([node_code(a.node), node_code(b.node)]);
            parent[node_slot(a.node)] = (idx as i32, 0);
            parent[node_slot(b.node)] = (idx as i32, 1);
            heap.push(HeapItem {
                weight: a.weight + b.weight,
                seq,
                node: idx,
            });
            seq += 1;
        }
        let root = node_code(heap.pop().unwrap().node);
        let mut codes = vec![(0u128, 0u8); NUM_SYMBOLS];
        for sym in 0..NUM_SYMBOLS {
            let mut code = 0u128;
            let mut len = 0u8;
            let mut slot = sym;
            let mut cur: i32 = !(sym as i32);
            while cur != root {
                let (p, bit) = parent[slot];
                code = (code << 1) | bit as u128;
                len += 1;
                assert!(len <= 120, "huffman code too long");
                cur = p;
                slot = NUM_SYMBOLS + p as usize;
            }
            // code now holds root->leaf bits in LSB-first emission order
            codes[sym] = (code, len);
        }
        HuffmanCode {
            codes,
            children,
            root,
        }
    }

    pub fn encode(&self, w: &mut BitWriter, symbol: u8) {
        let (code, len) = self.codes[symbol as usize];
        w.write_bits_wide(code, len as u32);
    }

    pub fn decode(&self, r: &mut BitReader<'_>) -> Result<u8> {
        let mut cur = self.root;
        loop {
            if cur < 0 {
                return Ok((!cur) as u8);
            }
            let bit = r.read_bit()? as usize;
            cur = self
                .children
                .get(cur as usize)
                .ok_or(Error::Corrupt("huffman tree walk out of bounds"))?[bit];
        }
    }

    /// Code length in bits for a symbol (model-size diagnostics).
    pub fn code_len(&self, symbol: u8) -> u32 {
        self.codes[symbol as usize].1 as u32
    }
}
