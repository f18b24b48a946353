use crate::tape::Var;
use crate::tensor::Tensor;

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Negative-side slope; the subgradient at 0 is this slope.
    LeakyRelu(f64),
}

impl Activation {
    fn negative_slope(self) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::LeakyRelu(slope) => slope,
        }
    }
}

pub fn activate(x: &Tensor, kind: Activation) -> Tensor {
    let slope = kind.negative_slope();
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

impl<'t> Var<'t> {
    pub fn activate(&self, kind: Activation) -> Var<'t> {
        let value = activate(self.value(), kind);
        self.tape().note_kinks(|| self.value().data().iter().map(|&x| x > 0.0));
        let input = self.shared();
        let slope = kind.negative_slope();
        self.tape().record(value, &[self], move |g, _| {
            vec![Some(
                g.zip_map(&input, |gv, x| if x > 0.0 { gv } else { slope * gv })
                    .expect("same shape"),
            )]
        })
    }

    pub fn relu(&self) -> Var<'t> {
        self.activate(Activation::Relu)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.activate(Activation::LeakyRelu(slope))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn definitions() {
        let x = Tensor::new(&[3], vec![-1., 0., 2.]).unwrap();
        assert_eq!(activate(&x, Activation::Relu).data(), &[0., 0., 2.]);
        let y = Tensor::new(&[1], vec![-2.]).unwrap();
        assert!((activate(&y, Activation::LeakyRelu(0.01)).data()[0] + 0.02).abs() < 1e-15);
    }

    #[test]
    fn leaky_gradient_and_subgradient_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[3], vec![-5., 5., 0.]).unwrap());
        let y = x.leaky_relu(0.01).sum();
        let g = tape.backward(&y).unwrap();
        assert_eq!(g.wrt(&x).data(), &[0.01, 1.0, 0.01]);
    }
}
