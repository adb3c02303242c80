use mkv::formats::{self, MkvgFile, Payload};
use mkv_core::parametrix::{heat_kernel, CoefficientField, SeriesConfig};
use mkv_core::{Grid, Measure, MeasureFlow, WeightFunction};
use proptest::prelude::*;

fn encode(f: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).unwrap();
    buf
}

#[test]
fn header_layout_is_little_endian() {
    let g = Grid::new(vec![-1.0, 0.0], vec![1.0, 3.0], vec![2, 3]).unwrap();
    let vals: Vec<f64> = (0..6).map(|i| i as f64).collect();
    let bytes = encode(|w| formats::write_measure(w, &Measure::grid(g.clone(), vals.clone()).unwrap()));
    let mut want = b"MKVG".to_vec();
    for v in [1u32, 2, 2, 3] {
        want.extend(v.to_le_bytes());
    }
    for v in [-1.0f64, 1.0, 0.0, 3.0] {
        want.extend(v.to_le_bytes());
    }
    for v in &vals {
        want.extend(v.to_le_bytes());
    }
    assert_eq!(bytes, want);
}

#[test]
fn kernel_round_trip_keeps_time_and_start_blocks() {
    let g = Grid::line(-3.0, 3.0, 24);
    let k = heat_kernel(&CoefficientField::constant(1, 0.5), &g, 0.0, &[0.5, 1.0], &[-0.5, 0.5], &SeriesConfig::default()).unwrap();
    let bytes = encode(|w| formats::write_kernel(w, &k));
    let back = formats::read(&mut bytes.as_slice()).unwrap();
    assert_eq!(back.version(), 2);
    assert_eq!(back.payload, Payload::Kernel { s: 0.0, t_nodes: vec![0.5, 1.0], x_points: vec![-0.5, 0.5] });
    assert_eq!(back.values, k.values);
    assert_eq!(back.slices(), 4);
    let direct: Vec<f64> = (0..2).flat_map(|t| (0..2).map(move |x| (t, x))).map(|(t, x)| k.mass(t, x)).collect();
    assert!(back.masses().iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-14));
}

#[test]
fn flow_round_trip_2d() {
    let g = Grid::symmetric(2, 3.0, 12);
    let times = vec![0.5, 1.0];
    let ms: Vec<Measure> = times.iter().map(|t| Measure::gaussian_on_grid(&g, &[0.0, 0.5], *t)).collect();
    let flow = MeasureFlow::new(times, ms, WeightFunction::one(), true).unwrap();
    let bytes = encode(|w| formats::write_flow(w, &flow));
    let back = formats::read(&mut bytes.as_slice()).unwrap().to_flow(WeightFunction::one()).unwrap();
    assert_eq!(back, flow);
}

#[test]
fn corrupt_files_are_rejected() {
    let g = Grid::line(0.0, 1.0, 4);
    let good = encode(|w| formats::write_measure(w, &Measure::grid(g, vec![1.0; 4]).unwrap()));
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let mut bad_version = good.clone();
    bad_version[4] = 9;
    let truncated = &good[..good.len() - 3];
    let mut trailing = good.clone();
    trailing.push(0);
    for (what, b) in [("magic", &bad_magic[..]), ("version", &bad_version[..]), ("truncated", truncated), ("trailing", &trailing[..])] {
        assert!(formats::read(&mut &b[..]).is_err(), "{what} accepted");
    }
    assert!(formats::read(&mut good.as_slice()).is_ok());
}

#[test]
fn atoms_do_not_serialize() {
    let mut buf = Vec::new();
    assert!(formats::write_measure(&mut buf, &Measure::dirac(&[0.0])).is_err());
}

#[test]
fn csv_tables_have_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::symmetric(2, 1.0, 2);
    let m = Measure::grid(g, vec![0.25; 4]).unwrap();
    let p = dir.path().join("m.csv");
    formats::measure_csv(&p, &m).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x0,x1,value");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[1], "-0.5,-0.5,0.25");
    let t = dir.path().join("t.csv");
    formats::trace_csv(&t, &[(1, 0.5, 12.0)]).unwrap();
    assert_eq!(std::fs::read_to_string(&t).unwrap(), "iter,residual,wallclock_ms\n1,0.5,12.000\n");
}

proptest! {
    #[test]
    fn measure_round_trip_is_bitwise(lo in -5.0..0.0f64, width in 0.1..10.0f64, vals in proptest::collection::vec(0.0..10.0f64, 4..64)) {
        let g = Grid::line(lo, lo + width, vals.len());
        let m = Measure::grid(g, vals).unwrap();
        let bytes = encode(|w| formats::write_measure(w, &m));
        let back: MkvgFile = formats::read(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back.to_measure().unwrap(), m);
    }
}
