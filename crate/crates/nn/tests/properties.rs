use affmt_nn::layers::{ActivationKind, Padding};
use affmt_nn::spec::{self, HeadSpec, LayerSpec};
use affmt_nn::{Generator, Mode, ModelSpec, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_output_stays_in_unit_range(z in prop::collection::vec(-50.0f32..50.0, 2 * 100), seed in 0u64..1000) {
        let mut g = Generator::new(&spec::generator_c1(), seed).unwrap();
        let x = g.forward(&Tensor::from_vec(&[2, 100], z), Mode::Train).unwrap();
        prop_assert!(x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn same_padding_conv_output_is_ceil(h in 1usize..20, w in 1usize..20, k in 1usize..6, s in 1usize..4) {
        let spec = ModelSpec {
            name: "conv".into(),
            input_shape: vec![h, w, 2],
            layers: vec![LayerSpec::conv([k, k, 2, 3], s, Padding::Same)],
            output_heads: vec![HeadSpec { name: "y".into(), size: h.div_ceil(s) * w.div_ceil(s) * 3, activation: ActivationKind::Linear }],
        };
        let shapes = spec.infer_shapes().unwrap();
        prop_assert_eq!(&shapes[0], &vec![h.div_ceil(s), w.div_ceil(s), 3]);
    }

    #[test]
    fn transposed_same_doubles(h in 1usize..10, k in 1usize..8) {
        let spec = ModelSpec {
            name: "convT".into(),
            input_shape: vec![h, h, 2],
            layers: vec![LayerSpec::conv_transpose([k, k, 2, 1], 2, Padding::Same)],
            output_heads: vec![HeadSpec { name: "y".into(), size: 4 * h * h, activation: ActivationKind::Linear }],
        };
        prop_assert_eq!(&spec.infer_shapes().unwrap()[0], &vec![2 * h, 2 * h, 1]);
    }
}
