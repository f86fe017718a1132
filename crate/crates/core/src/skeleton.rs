//! Synthetic 49-keypoint upper-body layout: 7 arm/torso joints followed by
//! two 21-joint hands.

pub const NUM_KEYPOINTS: usize = 49;
pub const FRAME_WIDTH: usize = NUM_KEYPOINTS * 2;

pub const NECK: usize = 0;
pub const RIGHT_SHOULDER: usize = 1;
pub const RIGHT_ELBOW: usize = 2;
pub const RIGHT_WRIST: usize = 3;
pub const LEFT_SHOULDER: usize = 4;
pub const LEFT_ELBOW: usize = 5;
pub const LEFT_WRIST: usize = 6;
pub const RIGHT_HAND: usize = 7;
pub const LEFT_HAND: usize = 28;

/// Parent/child keypoint pairs used for drawing.
pub fn bones() -> Vec<(usize, usize)> {
    let mut bones = vec![
        (NECK, RIGHT_SHOULDER),
        (RIGHT_SHOULDER, RIGHT_ELBOW),
        (RIGHT_ELBOW, RIGHT_WRIST),
        (NECK, LEFT_SHOULDER),
        (LEFT_SHOULDER, LEFT_ELBOW),
        (LEFT_ELBOW, LEFT_WRIST),
        (RIGHT_WRIST, RIGHT_HAND),
        (LEFT_WRIST, LEFT_HAND),
    ];
    for root in [RIGHT_HAND, LEFT_HAND] {
        for finger in 0..5 {
            let mut prev = root;
            for joint in 0..4 {
                let idx = root + 1 + finger * 4 + joint;
                bones.push((prev, idx));
                prev = idx;
            }
        }
    }
    bones
}

/// Rest pose in normalized coordinates, flattened as (x0, y0, x1, y1, ...).
pub fn rest_pose() -> Vec<f64> {
    let mut pts = vec![(0.0, 0.0); NUM_KEYPOINTS];
    pts[NECK] = (0.0, 0.55);
    pts[RIGHT_SHOULDER] = (-0.3, 0.5);
    pts[RIGHT_ELBOW] = (-0.4, 0.15);
    pts[RIGHT_WRIST] = (-0.3, -0.15);
    pts[LEFT_SHOULDER] = (0.3, 0.5);
    pts[LEFT_ELBOW] = (0.4, 0.15);
    pts[LEFT_WRIST] = (0.3, -0.15);
    for (root, wrist, side) in [(RIGHT_HAND, RIGHT_WRIST, -1.0), (LEFT_HAND, LEFT_WRIST, 1.0)] {
        let (wx, wy) = pts[wrist];
        let (rx, ry) = (wx + side * 0.02, wy - 0.04);
        pts[root] = (rx, ry);
        for finger in 0..5 {
            let spread = (finger as f64 - 2.0) * 0.025;
            for joint in 0..4 {
                let step = 0.025 * (joint + 1) as f64;
                pts[root + 1 + finger * 4 + joint] = (rx + side * spread, ry - step);
            }
        }
    }
    pts.into_iter().flat_map(|(x, y)| [x, y]).collect()
}
