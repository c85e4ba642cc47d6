/// Bit-packed source route. Each hop stores the index of the next node in
/// the current node's neighbor list (ascending id order), using
/// `max(1, ceil(log2(degree)))` bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NixVector {
    words: Vec<u64>,
    len: u32,
    cursor: u32,
    hops: u16,
}

/// Bits needed to address one of `degree` neighbors.
pub fn index_width(degree: usize) -> u32 {
    if degree <= 1 {
        1
    } else {
        usize::BITS - (degree - 1).leading_zeros()
    }
}

impl NixVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total encoded bits.
    pub fn len_bits(&self) -> u32 {
        self.len
    }

    pub fn cursor(&self) -> u32 {
        self.cursor
    }

    pub fn hops(&self) -> u16 {
        self.hops
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.len
    }

    /// Heap bytes plus the fixed part.
    pub fn memory_bytes(&self) -> usize {
        std::mem::size_of::<Self>() + self.words.len() * std::mem::size_of::<u64>()
    }

    /// Appends one hop.
    pub fn push(&mut self, index: u32, width: u32) {
        debug_assert!((1..=32).contains(&width));
        debug_assert!(width == 32 || index < (1 << width));
        for i in (0..width).rev() {
            let bit = (index >> i) & 1;
            let pos = self.len as usize;
            if pos / 64 >= self.words.len() {
                self.words.push(0);
            }
            if bit == 1 {
                self.words[pos / 64] |= 1 << (63 - pos % 64);
            }
            self.len += 1;
        }
        self.hops += 1;
    }

    /// Reads `width` bits at the cursor and advances it.
    pub fn read(&mut self, width: u32) -> Option<u32> {
        if self.cursor + width > self.len {
            return None;
        }
        let mut value = 0u32;
        for _ in 0..width {
            let pos = self.cursor as usize;
            let bit = (self.words[pos / 64] >> (63 - pos % 64)) & 1;
            value = (value << 1) | bit as u32;
            self.cursor += 1;
        }
        Some(value)
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }
}
