/// Symmetric quadrature on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    /// Barycentric coordinates of each point.
    pub points: Vec<[f64; 3]>,
    /// Weights; they sum to the reference area 1/2.
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// 12-point rule exact for polynomials of total degree 6.
    pub fn degree6() -> QuadratureRule {
        // (orbit generator, weight relative to area 1)
        const A1: f64 = 0.063_089_014_491_502_228_340_331_602_870_819;
        const W1: f64 = 0.050_844_906_370_206_816_920_936_809_106_869;
        const A2: f64 = 0.249_286_745_170_910_421_291_638_553_107_02;
        const W2: f64 = 0.116_786_275_726_379_366_025_289_611_385_58;
        const C: f64 = 0.053_145_049_844_816_947_353_249_671_631_398;
        const D: f64 = 0.310_352_451_033_784_405_416_607_733_956_55;
        const W3: f64 = 0.082_851_075_618_373_575_193_553_456_420_442;

        let mut points = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let b = 1.0 - 2.0 * a;
            for p in [[b, a, a], [a, b, a], [a, a, b]] {
                points.push(p);
                weights.push(0.5 * w);
            }
        }
        let e = 1.0 - C - D;
        for p in [[C, D, e], [D, C, e], [C, e, D], [D, e, C], [e, C, D], [e, D, C]] {
            points.push(p);
            weights.push(0.5 * W3);
        }
        QuadratureRule { points, weights, degree: 6 }
    }

    /// Gauss-Legendre rule on `[0, 1]`, used along edges.
    pub fn gauss_line(n: usize) -> (Vec<f64>, Vec<f64>) {
        match n {
            1 => (vec![0.5], vec![1.0]),
            2 => {
                let d = 0.5 / 3f64.sqrt();
                (vec![0.5 - d, 0.5 + d], vec![0.5, 0.5])
            }
            _ => {
                let d = 0.5 * (0.6f64).sqrt();
                (vec![0.5 - d, 0.5, 0.5 + d], vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
