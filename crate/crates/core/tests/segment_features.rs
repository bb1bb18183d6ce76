mod common;

use bandsel::segments::ClassLabel;
use bandsel::synth::SynthConfig;
use bandsel::texture::DEFAULT_LEVELS;

fn quantize(samples: &[u16], levels: usize) -> Vec<u8> {
    let min = *samples.iter().min().unwrap() as f64;
    let max = *samples.iter().max().unwrap() as f64;
    samples
        .iter()
        .map(|&v| ((v as f64 - min) * levels as f64 / (max - min + 1.0)).floor() as u8)
        .collect()
}

#[test]
fn kept_segments_match_naive_texture() {
    let data = common::segment_dataset(&[SynthConfig::landsat_like(160, 160, 11)], 300, 42);
    let scene = &data.scenes[0];
    let kept: Vec<_> = data.records.iter().filter(|r| r.is_kept()).collect();
    assert_eq!(data.features.rows(), kept.len());
    assert_eq!(data.features.columns(), 7 * 52);
    assert!(kept.iter().any(|r| r.label == ClassLabel::Forest));
    assert!(kept.iter().any(|r| r.label == ClassLabel::NonForest));

    let w = scene.width();
    let levels: Vec<Vec<u8>> = (1..=7)
        .map(|b| quantize(&scene.band(b).unwrap().samples, DEFAULT_LEVELS))
        .collect();
    let mut worst = 0.0f64;
    for (row, record) in kept.iter().enumerate().step_by(3) {
        // Every co-occurring pair lies inside the segment, so its bounding box suffices.
        let (x0, y0, x1, y1) = record.bbox;
        let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut selected = vec![false; cw * ch];
        for &p in &record.pixels {
            let (x, y) = (p as usize % w, p as usize / w);
            selected[(y - y0) * cw + (x - x0)] = true;
        }
        let features = data.features.row(row);
        for (b, q) in levels.iter().enumerate() {
            let crop: Vec<u8> = (y0..=y1).flat_map(|y| q[y * w + x0..=y * w + x1].iter().copied()).collect();
            for (d, &offset) in common::OFFSETS.iter().enumerate() {
                let (p, _) = common::naive_glcm(cw, ch, DEFAULT_LEVELS, &crop, &selected, offset);
                let expected = common::naive_haralick(&p);
                let got = &features[b * 52 + d * 13..b * 52 + (d + 1) * 13];
                for (e, g) in expected.iter().zip(got) {
                    assert!(g.is_finite());
                    worst = worst.max((e - g).abs() / e.abs().max(1.0));
                }
            }
        }
    }
    assert!(worst <= 1e-9, "max relative difference {worst:e}");
}

#[test]
fn dataset_is_reproducible() {
    let cfg = [SynthConfig::landsat_like(120, 120, 5)];
    let a = common::segment_dataset(&cfg, 300, 7);
    let b = common::segment_dataset(&cfg, 300, 7);
    assert_eq!(a.records, b.records);
    assert_eq!(a.features.data, b.features.data);
}
