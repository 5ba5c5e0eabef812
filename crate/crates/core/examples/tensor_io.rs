//! Write a matrix and a label vector in the raw tensor format, then read
//! them back through their sidecars.

use oodeval::tensor::{self, TensorHandle};
use oodeval::Matrix;

fn main() -> oodeval::Result<()> {
    let dir = std::env::temp_dir().join("oodeval-tensor-io");
    let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]])?;
    let bin = tensor::save_matrix(dir.join("features"), &m)?;
    tensor::save_i32(dir.join("labels"), &[2], &[0, 1])?;

    let handle = TensorHandle::open(&bin)?;
    println!("{}: dtype {:?}, shape {:?}", bin.display(), handle.dtype, handle.shape);
    assert_eq!(tensor::load_matrix(&bin)?, m);
    println!("labels: {:?}", tensor::load_i32_vector(dir.join("labels.bin"))?);
    Ok(())
}
