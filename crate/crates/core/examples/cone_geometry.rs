//! Signed distances to a polyhedral cone, plus the two projection kernels.

use nalgebra::{dvector, DVector};
use polycone::geometry::{
    project_onto_polyhedron, project_onto_simplex, Halfspace, PolyhedralCone, ProjectionOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // the quarter plane x <= 0, y <= 0
    let cone = PolyhedralCone::from_normals([dvector![1.0, 0.0], dvector![0.0, 1.0]])?;
    let options = ProjectionOptions::default();
    for x in [dvector![-2.0, -1.0], dvector![3.0, -1.0], dvector![1.0, 1.0], dvector![0.0, 0.0]] {
        let d = cone.signed_distance(&x, &options)?;
        println!("signed distance of ({:5.2}, {:5.2}) = {d:+.4}", x[0], x[1]);
    }

    // homogeneity
    let x = dvector![0.3, -1.7];
    let d1 = cone.signed_distance(&x, &options)?;
    let d5 = cone.signed_distance(&(&x * 5.0), &options)?;
    println!("d(5x) / d(x) = {:.6}", d5 / d1);

    // a bounded polygon: the unit box cut by x + y <= 1.5
    let halfspaces = vec![
        Halfspace::new(dvector![1.0, 0.0], 1.0)?,
        Halfspace::new(dvector![-1.0, 0.0], 0.0)?,
        Halfspace::new(dvector![0.0, 1.0], 1.0)?,
        Halfspace::new(dvector![0.0, -1.0], 0.0)?,
        Halfspace::new(dvector![1.0, 1.0], 1.5)?,
    ];
    let p = project_onto_polyhedron(&halfspaces, &dvector![2.0, 2.0], &options)?;
    println!("nearest point to (2, 2): ({:.6}, {:.6})", p[0], p[1]);

    let v: DVector<f64> = dvector![0.9, 0.4, -0.3];
    let a = project_onto_simplex(&v);
    println!("simplex projection of {:?}: {:?} (sum {:.3})", v.as_slice(), a.as_slice(), a.sum());
    Ok(())
}
