//! Byte-level round trips of rasters, checkpoints, images and configs.

use damformer::checkpoint;
use damformer::config::{ModelConfig, RunConfig};
use damformer::data::{
    decode_pgm, decode_ppm, decode_raster, encode_pgm, encode_ppm, encode_raster, palette_to_mask,
    render_damage_palette, Raster, RgbImage,
};
use damformer::mask::Mask;
use damformer::nn::DamFormer;
use damformer::params::ParamStore;
use damformer::{Error, Tensor};
use proptest::prelude::*;

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 1..5)
}

fn f32_raster() -> impl Strategy<Value = Raster> {
    shape_strategy().prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        // raw bit patterns cover NaN payloads, infinities, signed zeros and subnormals
        prop::collection::vec(any::<u32>(), n).prop_map(move |bits| {
            Raster::F32(Tensor::new(&shape, bits.into_iter().map(f32::from_bits).collect()).unwrap())
        })
    })
}

fn u8_raster() -> impl Strategy<Value = Raster> {
    shape_strategy().prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(any::<u8>(), n).prop_map(move |data| Raster::U8(Mask::new(&shape, data).unwrap()))
    })
}

fn store_strategy() -> impl Strategy<Value = ParamStore<f32>> {
    prop::collection::vec((shape_strategy(), any::<u32>()), 0..6).prop_map(|params| {
        let mut store = ParamStore::new();
        for (i, (shape, seed)) in params.into_iter().enumerate() {
            let n: usize = shape.iter().product();
            let data = (0..n as u32).map(|k| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(k))).collect();
            store.add(format!("p{i}.weight"), Tensor::new(&shape, data).unwrap());
        }
        store
    })
}

proptest! {
    #[test]
    fn f32_raster_round_trip(r in f32_raster()) {
        let bytes = encode_raster(&r).unwrap();
        let back = decode_raster(&bytes).unwrap();
        prop_assert!(back.bit_eq(&r));
        prop_assert_eq!(encode_raster(&back).unwrap(), bytes);
    }

    #[test]
    fn u8_raster_round_trip(r in u8_raster()) {
        let bytes = encode_raster(&r).unwrap();
        prop_assert!(decode_raster(&bytes).unwrap().bit_eq(&r));
    }

    #[test]
    fn truncated_rasters_are_rejected(r in u8_raster(), cut in 0usize..64) {
        let bytes = encode_raster(&r).unwrap();
        let cut = cut.min(bytes.len() - 1);
        let is_format_error = matches!(decode_raster(&bytes[..cut]), Err(Error::Format { .. }));
        prop_assert!(is_format_error);
    }

    #[test]
    fn checkpoint_round_trip(store in store_strategy()) {
        let bytes = checkpoint::encode(&store);
        let entries = checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(entries.len(), store.len());
        let mut back = store.clone();
        checkpoint::load_into(&mut back, entries).unwrap();
        prop_assert!(back.bit_eq(&store));
        prop_assert_eq!(checkpoint::encode(&back), bytes);
    }

    #[test]
    fn palette_round_trip(data in prop::collection::vec(0u8..5, 1..64), w in 1usize..8) {
        let h = data.len() / w;
        prop_assume!(h > 0);
        let mask = Mask::new(&[h, w], data[..h * w].to_vec()).unwrap();
        let img = render_damage_palette(&mask).unwrap();
        let back = decode_ppm(&encode_ppm(&img)).unwrap();
        prop_assert_eq!(&back, &img);
        prop_assert_eq!(palette_to_mask(&back).unwrap(), mask.clone());
        let loc = Mask::new(&[h, w], mask.data().iter().map(|&v| (v > 0) as u8).collect()).unwrap();
        let gray = decode_pgm(&encode_pgm(&loc, 255).unwrap()).unwrap();
        prop_assert_eq!(gray.data().iter().map(|&v| (v > 0) as u8).collect::<Vec<_>>(), loc.data().to_vec());
    }
}

#[test]
fn model_checkpoint_round_trip_through_file() {
    let (_, store) = DamFormer::init::<f32>(&ModelConfig::default(), 42).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.dfw");
    checkpoint::save(&path, &store).unwrap();
    let (_, mut other) = DamFormer::init::<f32>(&ModelConfig::default(), 43).unwrap();
    assert!(!other.bit_eq(&store));
    checkpoint::load(&path, &mut other).unwrap();
    assert!(other.bit_eq(&store));
    assert_eq!(std::fs::read(&path).unwrap(), checkpoint::encode(&other));
}

#[test]
fn checkpoint_for_other_architecture_is_rejected() {
    let (_, store) = DamFormer::init::<f32>(&ModelConfig::default(), 0).unwrap();
    let mut small = ModelConfig::default();
    small.encoder.blocks = [1, 1, 1, 1];
    let (_, mut other) = DamFormer::init::<f32>(&small, 0).unwrap();
    let entries = checkpoint::decode(&checkpoint::encode(&store)).unwrap();
    assert!(checkpoint::load_into(&mut other, entries).is_err());
}

#[test]
fn palette_is_the_published_colour_map() {
    let mask = Mask::new(&[1, 5], vec![0, 1, 2, 3, 4]).unwrap();
    let img = render_damage_palette(&mask).unwrap();
    let expected: Vec<u8> = [
        [0, 0, 0],       // background: black
        [255, 255, 255], // no damage: white
        [0, 255, 0],     // minor: green
        [255, 255, 0],   // major: yellow
        [255, 0, 0],     // destroyed: red
    ]
    .concat();
    assert_eq!(img, RgbImage { width: 5, height: 1, data: expected });
    assert!(encode_ppm(&img).starts_with(b"P6\n5 1\n255\n"));
}

#[test]
fn palette_rejects_unknown_classes_and_colours() {
    assert!(render_damage_palette(&Mask::new(&[1, 1], vec![5]).unwrap()).is_err());
    let odd = RgbImage { width: 1, height: 1, data: vec![1, 2, 3] };
    assert!(palette_to_mask(&odd).is_err());
}

#[test]
fn config_text_round_trip() {
    let mut run = RunConfig::default();
    run.set("enc.channels", "8,16,24,32").unwrap();
    run.set("enc.heads", "1,2,3,4").unwrap();
    run.set("dec.addback", "pre_conv").unwrap();
    run.set("loss.alpha", "0.75").unwrap();
    run.set("data.train_dir", "some/dir").unwrap();
    let back = RunConfig::parse(&run.to_text()).unwrap();
    assert_eq!(back, run);
    assert_eq!(back.to_text(), run.to_text());
}

#[test]
fn config_errors_name_the_line() {
    let err = RunConfig::parse("opt.lr = 1e-3\nopt.bogus = 2\n").unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    assert!(RunConfig::parse("opt.lr 1e-3\n").is_err());
    assert!(RunConfig::parse("opt.lr = fast\n").is_err());
}
