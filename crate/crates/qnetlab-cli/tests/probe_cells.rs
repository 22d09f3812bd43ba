use qnetlab::{
    eval_protocol_d, NoiseKind, NoiseSpec,
};

#[test]
#[ignore]
fn probe() {
    for i in 0..20 {
        for j in 0..20 {
            let p = i as f64 / 19.0;
            let q = j as f64 / 19.0;
            let n1 = NoiseSpec::new(NoiseKind::AmplitudeDamping, p).unwrap();
            let n2 = NoiseSpec::new(NoiseKind::Depolarizing, q).unwrap();
            if let Err(e) = eval_protocol_d(&n1, &n2) {
                println!("FAIL p={p:.6} q={q:.6}: {e}");
            }
        }
    }
    println!("scan done");
}
