use crate::error::{Error, Result};
use crate::tensor::{glorot_init, DetRng, Matrix, Real};

/// One learned offset row per device, added to that device's output
/// representation before the gather.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceEncoding<T> {
    table: Matrix<T>,
}

impl<T: Real> SliceEncoding<T> {
    pub fn new(devices: usize, width: usize, rng: &mut DetRng) -> Self {
        Self {
            table: glorot_init(devices, width, rng),
        }
    }

    pub fn from_table(table: Matrix<T>) -> Self {
        Self { table }
    }

    pub fn devices(&self) -> usize {
        self.table.rows()
    }

    pub fn width(&self) -> usize {
        self.table.cols()
    }

    pub fn table(&self) -> &Matrix<T> {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut Matrix<T> {
        &mut self.table
    }

    fn check(&self, h: &Matrix<T>, device: usize) -> Result<()> {
        if device >= self.devices() {
            return Err(Error::InvalidArgument(format!(
                "device {device} out of range for {} encoding rows",
                self.devices()
            )));
        }
        if h.cols() != self.width() {
            return Err(Error::shape("slice encoding", h.shape(), self.table.shape()));
        }
        Ok(())
    }

    /// `H + E[device, :]` broadcast over rows.
    pub fn encode(&self, mut h: Matrix<T>, device: usize) -> Result<Matrix<T>> {
        self.check(&h, device)?;
        let row = Matrix::from_vec(1, self.width(), self.table.row(device).to_vec())?;
        h.add_row_broadcast(&row)?;
        Ok(h)
    }

    /// Gradient of the whole table given each device's upstream gradient, in
    /// device order. The representation gradient passes through unchanged.
    pub fn backward(&self, d_blocks: &[Matrix<T>]) -> Result<Matrix<T>> {
        if d_blocks.len() != self.devices() {
            return Err(Error::shape(
                "slice encoding backward",
                (d_blocks.len(), 0),
                self.table.shape(),
            ));
        }
        let mut grad = Matrix::zeros(self.devices(), self.width());
        for (i, d) in d_blocks.iter().enumerate() {
            self.check(d, i)?;
            grad.row_mut(i).copy_from_slice(d.column_sums().data());
        }
        Ok(grad)
    }
}
