use dhlab_core::arcs::{
    direct_sum_i, integrate_regions, main_term_volume, nested_volume, partition, t_product_split, ArcIntegrand,
    Cutoff,
};
use dhlab_core::model::{validate_instance, window_at_scale, ProblemInstance, RawConfig, DEFAULT_U};
use dhlab_core::oscillatory::integration_step;
use dhlab_core::prime_tables::build_tables;

fn instance(k: &str) -> ProblemInstance {
    let mut raw = RawConfig::default_instance();
    raw.k = k.into();
    raw.delta = "1/10".into();
    validate_instance(&raw).unwrap()
}

#[test]
fn parseval_identity_holds_on_three_scales() {
    let inst = instance("11/10");
    let tables = build_tables(20_000, 200).unwrap();
    for x in [400.0, 1600.0, 1e4] {
        let w = window_at_scale(&inst, x, DEFAULT_U).unwrap().with_eta(1.0).unwrap();
        let f = ArcIntegrand::new(&inst, &w, &tables).unwrap();
        let part = partition(&w).unwrap();
        let step = integration_step(x, inst.max_abs_lambda());
        let r = integrate_regions(&f, &part, step, Cutoff::Auto).unwrap();
        let direct = direct_sum_i(&f).unwrap().value;
        let real = &r.real;
        let gap = (real.value_re - direct).abs();
        let bound = real.err + real.tail.unwrap();
        println!(
            "X={x}: direct={direct:.6} integral={:.6} gap={gap:.3e} err={:.3e} tail={:.3e} cutoff={}",
            real.value_re,
            real.err,
            real.tail.unwrap(),
            real.cutoff
        );
        assert!(gap <= bound);
        assert!(bound <= 0.05 * direct.abs());
        assert!(real.value_im.abs() <= real.err);
    }
}

#[test]
fn volume_agrees_with_nested_quadrature() {
    let inst = instance("21/20");
    let w = window_at_scale(&inst, 1e4, DEFAULT_U).unwrap().with_eta(1.0).unwrap();
    let mc = main_term_volume(&inst, &w, 200_000, 7).unwrap();
    let nested = nested_volume(&inst, &w, 24).unwrap();
    println!("mc={} +- {} nested={nested}", mc.value, mc.mc_error);
    assert!((mc.value - nested).abs() <= 3.0 * mc.mc_error);

    let doubled = main_term_volume(&inst, &w.with_eta(2.0).unwrap(), 200_000, 7).unwrap();
    let ratio = doubled.value / mc.value;
    println!("eta doubling ratio {ratio}");
    assert!((ratio - 4.0).abs() <= 0.4);
}

#[test]
fn t_product_major_arc_dominates() {
    let inst = instance("21/20");
    for x in [1e4, 1e5] {
        let w = window_at_scale(&inst, x, DEFAULT_U).unwrap();
        let s = t_product_split(&inst, &w).unwrap();
        println!("X={x}: major={} err={} outside<={}", s.major, s.major_err, s.outside_bound);
        assert!(s.major > 0.0);
        assert!(s.major >= 10.0 * s.outside_bound);
    }
}

#[test]
fn volume_matches_t_product_integral() {
    let inst = instance("21/20");
    let w = window_at_scale(&inst, 1e4, DEFAULT_U).unwrap();
    let mc = main_term_volume(&inst, &w, 200_000, 11).unwrap();
    let s = t_product_split(&inst, &w).unwrap();
    println!("mc={} +- {}; T major={} +- {}, outside<={}", mc.value, mc.mc_error, s.major, s.major_err, s.outside_bound);
    assert!((mc.value - s.major).abs() <= 3.0 * mc.mc_error + s.major_err + s.outside_bound);
}
