use nalgebra::DMatrix;
use saddle_py::{matrix_from_rows, matrix_to_rows};

#[test]
fn nested_lists_are_row_major() {
    let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let rows = matrix_to_rows(&m);
    assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
    assert_eq!(matrix_from_rows(&rows).unwrap(), m);
}

#[test]
fn empty_input_gives_empty_matrix() {
    let m = matrix_from_rows(&[]).unwrap();
    assert_eq!(m.shape(), (0, 0));
    assert!(matrix_to_rows(&m).is_empty());
}
