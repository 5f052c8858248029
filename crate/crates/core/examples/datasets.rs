//! Generate a synthetic blob dataset, then round-trip it through the CSV and
//! IDX formats the loader accepts.
//!
//! cargo run --example datasets

use fedmia::data::{generate_synthetic, load_idx, read_csv, write_csv, write_idx};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(600, 16, 4, 2.5, 7)?;
    println!("synthetic: {} samples, {} features, classes {:?}", data.len(), data.num_features(), data.class_counts());

    let csv = read_csv(&write_csv(&data), "blobs")?;
    assert_eq!(csv.labels(), data.labels());
    println!("csv round trip: {} samples", csv.len());

    let dir = std::env::temp_dir().join(format!("fedmia-datasets-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (images, labels) = (dir.join("images.idx"), dir.join("labels.idx"));
    write_idx(&data, 4, 4, &images, &labels)?;
    let idx = load_idx(&images, &labels)?;
    let max_err = data
        .features()
        .as_slice()
        .iter()
        .zip(idx.features().as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("idx round trip: {} samples, quantization error {max_err:.4}", idx.len());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
