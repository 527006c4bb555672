//! Generate the synthetic patch task, write it to disk in the binary
//! dataset format, read it back and draw one image as text.

use sparse_hyper::glimpse::{PatchDataset, PatchTaskConfig};

fn main() -> sparse_hyper::Result<()> {
    let task = PatchTaskConfig::default();
    let data = PatchDataset::generate(7, 0, 100, task)?;
    let path = std::env::temp_dir().join("patches.bin");
    data.save(&path)?;
    let back = PatchDataset::load(&path)?;
    assert_eq!(back, data);
    println!("{} images of {}x{} round-tripped through {}", back.len(), task.image_size, task.image_size, path.display());

    let side = task.image_size;
    let (image, labels) = back.slice(0, 1);
    println!("label {}", labels[0]);
    for row in image.data().chunks(side) {
        let line: String = row.iter().map(|&p| if p > 0.5 { '#' } else if p > 0.15 { '.' } else { ' ' }).collect();
        println!("|{line}|");
    }
    Ok(())
}
