//! Build the similarity term for two heads by hand, take its gradient and compare against
//! central differences.

use divclust::autodiff::{finite_difference_check, Bindings, Graph, Tensor};

fn main() {
    let mut g = Graph::new();
    let x = g.input("x", &[4, 5]).unwrap();
    let mut heads = Vec::new();
    for name in ["w1", "w2"] {
        let w = g.param(name, &[3, 4]).unwrap();
        let logits = g.matmul(w, x).unwrap();
        let p = g.softmax_columns(logits).unwrap();
        heads.push(g.normalize_rows(p, 1e-12).unwrap());
    }
    let other = g.transpose(heads[1]).unwrap();
    let s = g.matmul(heads[0], other).unwrap();
    let best = g.row_max(s).unwrap();
    let out = g.mean(best);
    g.set_output(out).unwrap();

    let mut b = Bindings::new();
    b.insert("w1".into(), Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()));
    b.insert("w2".into(), Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 1.3).cos()).collect()));
    b.insert("x".into(), Tensor::matrix(4, 5, (0..20).map(|i| (i as f64 * 0.91).cos()).collect()));

    let eval = g.forward(&b).unwrap();
    println!("value      {}", eval.output().unwrap().item());
    let grads = eval.backward().unwrap();
    println!("dL/dw1     {:?}", grads.get("w1").unwrap().data());
    println!("max rel err {:.2e}", finite_difference_check(&g, &b, 1e-6).unwrap());
}
