use tokroute_core::protocol::Region;

/// Intersection over union of two boxes; 0 when the union is empty.
pub fn region_iou(a: &Region, b: &Region) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x1: f64, y1: f64, x2: f64, y2: f64) -> Region {
        Region::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn reference_values() {
        let a = r(0.1, 0.2, 0.6, 0.9);
        assert_eq!(region_iou(&a, &a), 1.0);
        assert_eq!(region_iou(&r(0.0, 0.0, 0.2, 0.2), &r(0.5, 0.5, 0.9, 0.9)), 0.0);
        // Overlap 0.25 x 0.25 = 1/16; union 1/4 + 1/4 - 1/16 = 7/16.
        let v = region_iou(&r(0.0, 0.0, 0.5, 0.5), &r(0.25, 0.25, 0.75, 0.75));
        assert!((v - 1.0 / 7.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn degenerate_boxes() {
        let point = r(0.3, 0.3, 0.3, 0.3);
        assert_eq!(region_iou(&point, &point), 0.0);
        let line = r(0.1, 0.5, 0.9, 0.5);
        assert_eq!(region_iou(&line, &r(0.0, 0.0, 1.0, 1.0)), 0.0);
        // Touching edges share no area.
        assert_eq!(region_iou(&r(0.0, 0.0, 0.5, 1.0), &r(0.5, 0.0, 1.0, 1.0)), 0.0);
    }
}
