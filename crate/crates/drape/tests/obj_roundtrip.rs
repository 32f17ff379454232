use drape::obj::{format_obj, parse_obj};
use drape_core::mesh::primitives::icosphere;

#[test]
fn meshes_survive_a_text_round_trip_bit_for_bit() {
    let m = icosphere(2, 0.37);
    let back = parse_obj(&format_obj(&m)).unwrap();
    assert_eq!(back, m);
}

#[test]
fn uvs_survive_a_text_round_trip() {
    let m = icosphere(1, 1.0);
    let uvs: Vec<[f64; 2]> = m.vertices.iter().map(|p| [0.5 + 0.5 * p.x, 0.5 - 0.25 * p.y]).collect();
    let m = m.with_uvs(uvs).unwrap();
    assert_eq!(parse_obj(&format_obj(&m)).unwrap(), m);
}
