use super::Position;

/// Largest number of cells along one axis. Larger fields get wider cells.
const MAX_CELLS_PER_AXIS: usize = 2048;

/// Uniform 2-D bucket grid over the field. z is ignored: the planar
/// distance never exceeds the 3-D one, so a planar query is a superset.
#[derive(Debug, Clone)]
pub(crate) struct Grid {
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl Grid {
    pub(crate) fn new(width: f64, height: f64, cell_size: f64) -> Self {
        let mut cell = if cell_size.is_finite() && cell_size > 0.0 {
            cell_size
        } else {
            width.max(height).max(1.0)
        };
        let longest = width.max(height);
        if longest / cell > MAX_CELLS_PER_AXIS as f64 {
            cell = longest / MAX_CELLS_PER_AXIS as f64;
        }
        let cols = ((width / cell).floor() as usize + 1).max(1);
        let rows = ((height / cell).floor() as usize + 1).max(1);
        Grid {
            cell,
            cols,
            rows,
            cells: vec![Vec::new(); cols * rows],
        }
    }

    fn coords(&self, p: &Position) -> (usize, usize) {
        let cx = ((p.x / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let cy = ((p.y / self.cell).floor().max(0.0) as usize).min(self.rows - 1);
        (cx, cy)
    }

    pub(crate) fn insert(&mut self, id: u32, p: &Position) {
        let (cx, cy) = self.coords(p);
        self.cells[cy * self.cols + cx].push(id);
    }

    pub(crate) fn remove(&mut self, id: u32, p: &Position) {
        let (cx, cy) = self.coords(p);
        let cell = &mut self.cells[cy * self.cols + cx];
        if let Some(i) = cell.iter().position(|&n| n == id) {
            cell.swap_remove(i);
        }
    }

    /// Calls `visit` for every id stored in a cell that may hold points
    /// within `radius` of `p`.
    pub(crate) fn candidates(&self, p: &Position, radius: f64, mut visit: impl FnMut(u32)) {
        let (x0, x1, y0, y1) = if radius.is_finite() {
            let span = (radius / self.cell).ceil() as usize;
            let (cx, cy) = self.coords(p);
            (
                cx.saturating_sub(span),
                (cx + span).min(self.cols - 1),
                cy.saturating_sub(span),
                (cy + span).min(self.rows - 1),
            )
        } else {
            (0, self.cols - 1, 0, self.rows - 1)
        };
        for cy in y0..=y1 {
            for cell in &self.cells[cy * self.cols + x0..=cy * self.cols + x1] {
                cell.iter().copied().for_each(&mut visit);
            }
        }
    }
}
