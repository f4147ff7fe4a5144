use affmt_core::gradcheck::loss_suite;

#[test]
fn every_loss_matches_central_differences() {
    let results = loss_suite(100, 2024);
    let mut failed = Vec::new();
    for r in &results {
        println!("{:<32} fixtures={:<4} worst={:.3e}", r.name, r.fixtures, r.worst);
        assert!(r.fixtures >= 100);
        if !r.passed(1e-4) {
            failed.push(r.name.clone());
        }
    }
    assert!(failed.is_empty(), "gradient mismatch in {failed:?}");
    // 1 ccc + 2 va + 2 au + 1 fake + 6 discriminator + 2 generator + 6 multitask
    assert_eq!(results.len(), 20);
}
