//! Rigid transforms, the pinhole camera model and the depth-image container.
//!
//! Conventions used throughout the crate:
//!
//! - Quaternions are Hamilton, stored `(w, x, y, z)`; a [`Pose`] maps sensor
//!   coordinates into the world frame (world←sensor).
//! - Camera frames are optical: `+z` forward, `+x` right, `+y` down.
//! - Integer pixel coordinates `(u, v)` address pixel centres. Projection
//!   rounds to the nearest pixel when rasterising.
//! - Depth images store z-depth (distance along the optical axis).

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// SE(3) rigid transform with a timestamp, world←sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub timestamp: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            timestamp: 0.0,
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(timestamp: f64, rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            timestamp,
            rotation,
            translation,
        }
    }

    /// Builds a pose from a `(w, x, y, z)` quaternion, normalising it.
    pub fn from_wxyz(timestamp: f64, wxyz: [f64; 4], translation: Vec3) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "quaternion {wxyz:?} cannot be normalised"
            )));
        }
        Ok(Self::new(
            timestamp,
            UnitQuaternion::from_quaternion(q),
            translation,
        ))
    }

    /// Rotation about +z by `yaw` radians followed by translation.
    pub fn from_yaw(timestamp: f64, yaw: f64, translation: Vec3) -> Self {
        Self::new(
            timestamp,
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation,
        )
    }

    /// Optical-frame camera at `eye` looking at `target`, image rows pointing
    /// away from `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 || forward.cross(&up).norm() < 1e-9 * forward.norm() * up.norm() {
            return Err(Error::InvalidParameter(format!(
                "look_at: degenerate view from {eye:?} to {target:?} with up {up:?}"
            )));
        }
        let rotation = UnitQuaternion::face_towards(&forward, &-up);
        Ok(Self::new(0.0, rotation, eye))
    }

    /// Body←camera transform for an optical camera mounted at `offset` on a
    /// body frame (x forward, y left, z up), turned `yaw` radians to the left.
    pub fn optical_mount(yaw: f64, offset: Vec3) -> Self {
        let base = nalgebra::Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(
            0.0, 0.0, 1.0, //
            -1.0, 0.0, 0.0, //
            0.0, -1.0, 0.0,
        ));
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * UnitQuaternion::from_rotation_matrix(&base);
        Self::new(0.0, rotation, offset)
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `R·p + t`
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self {
            timestamp: self.timestamp,
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first. Keeps `self`'s timestamp.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            timestamp: self.timestamp,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = self.rotation.to_homogeneous();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Pose at time `t`: linear in translation, slerp in rotation between the
/// bracketing samples. `traj` must be sorted by timestamp.
pub fn interpolate_pose(traj: &[Pose], t: f64) -> Result<Pose> {
    let (first, last) = match (traj.first(), traj.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyInput("trajectory")),
    };
    if !(t >= first.timestamp && t <= last.timestamp) {
        return Err(Error::OutOfRange {
            t,
            start: first.timestamp,
            end: last.timestamp,
        });
    }
    let idx = traj.partition_point(|p| p.timestamp < t);
    let hi = &traj[idx];
    if hi.timestamp == t {
        return Ok(*hi);
    }
    let lo = &traj[idx - 1];
    let alpha = (t - lo.timestamp) / (hi.timestamp - lo.timestamp);
    let translation = lo.translation.lerp(&hi.translation, alpha);
    // Take the short arc; q and -q are the same rotation.
    let mut hi_rot = hi.rotation;
    if lo.rotation.coords.dot(&hi_rot.coords) < 0.0 {
        hi_rot = UnitQuaternion::new_unchecked(-hi_rot.into_inner());
    }
    let rotation = lo
        .rotation
        .try_slerp(&hi_rot, alpha, 1e-12)
        .unwrap_or(lo.rotation);
    Ok(Pose::new(t, rotation, translation))
}

/// Pinhole intrinsics. `width`/`height` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// A projected point: continuous pixel coordinates plus z-depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Pixel {
    /// Nearest integer pixel (column, row).
    pub fn rounded(&self) -> (u32, u32) {
        (self.u.round() as u32, self.v.round() as u32)
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "camera intrinsics {self:?} violate fx, fy > 0 and 0 < cx < width, 0 < cy < height"
            )))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Projects a camera-frame point. Absent when behind the camera or when
    /// the nearest pixel falls outside the image.
    pub fn project(&self, p: &Vec3) -> Option<Pixel> {
        if !(p.z > 0.0) {
            return None;
        }
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        let (ru, rv) = (u.round(), v.round());
        if ru < 0.0 || rv < 0.0 || ru >= self.width as f64 || rv >= self.height as f64 {
            return None;
        }
        Some(Pixel { u, v, depth: p.z })
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.ray(u, v) * depth)
    }

    /// Un-normalised viewing ray `((u-cx)/fx, (v-cy)/fy, 1)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: u32, height: u32, data: Vec<T>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidParameter(format!(
                "grid data of length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> &T {
        &self.data[self.index(u, v)]
    }

    #[inline]
    pub fn get_mut(&mut self, u: u32, v: u32) -> &mut T {
        let i = self.index(u, v);
        &mut self.data[i]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: T) {
        let i = self.index(u, v);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `(u, v, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &T)> + '_ {
        let w = self.width as usize;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, x)| ((i % w) as u32, (i / w) as u32, x))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// Metric depth image. Absent depth marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub intrinsics: CameraIntrinsics,
    pub depth: Grid<Option<f64>>,
    /// Per-pixel standard deviation, present exactly where depth is present.
    pub sigma: Option<Grid<Option<f64>>>,
    /// Camera pose in the world frame (world←camera).
    pub pose: Pose,
}

impl DepthImage {
    pub fn empty(intrinsics: CameraIntrinsics, pose: Pose) -> Self {
        Self {
            intrinsics,
            depth: Grid::filled(intrinsics.width, intrinsics.height, None),
            sigma: None,
            pose,
        }
    }

    pub fn width(&self) -> u32 {
        self.depth.width()
    }

    pub fn height(&self) -> u32 {
        self.depth.height()
    }

    pub fn depth_at(&self, u: u32, v: u32) -> Option<f64> {
        *self.depth.get(u, v)
    }

    pub fn sigma_at(&self, u: u32, v: u32) -> Option<f64> {
        self.sigma.as_ref().and_then(|s| *s.get(u, v))
    }

    pub fn valid_count(&self) -> usize {
        self.depth.as_slice().iter().filter(|d| d.is_some()).count()
    }

    /// Checks the container invariants.
    pub fn validate(&self) -> Result<()> {
        let dims = (self.intrinsics.width, self.intrinsics.height);
        if self.depth.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.depth.dims(),
            });
        }
        if let Some(bad) = self
            .depth
            .as_slice()
            .iter()
            .flatten()
            .find(|d| !(**d > 0.0 && d.is_finite()))
        {
            return Err(Error::NonPositiveDepth(*bad));
        }
        if let Some(sigma) = &self.sigma {
            if sigma.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: sigma.dims(),
                });
            }
            let consistent = self
                .depth
                .as_slice()
                .iter()
                .zip(sigma.as_slice())
                .all(|(d, s)| match (d, s) {
                    (Some(_), Some(s)) => *s >= 0.0,
                    (None, None) => true,
                    _ => false,
                });
            if !consistent {
                return Err(Error::InvalidParameter(
                    "sigma grid must be present exactly on valid depth pixels".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Sensor,
    World,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn empty(frame: Frame) -> Self {
        Self::new(Vec::new(), frame)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    pub fn transformed(&self, pose: &Pose, frame: Frame) -> Self {
        Self::new(
            self.points.iter().map(|p| pose.transform_point(p)).collect(),
            frame,
        )
    }

    /// Keeps one point per cubic cell of side `cell` (the first seen).
    pub fn voxel_downsample(&self, cell: f64) -> Self {
        let mut seen = std::collections::HashSet::new();
        let points = self
            .points
            .iter()
            .filter(|p| {
                let key = (
                    (p.x / cell).floor() as i64,
                    (p.y / cell).floor() as i64,
                    (p.z / cell).floor() as i64,
                );
                seen.insert(key)
            })
            .copied()
            .collect();
        Self::new(points, self.frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(400.0, 400.0, 424.0, 240.0, 848, 480).unwrap()
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform4(-1.0f64..1.0),
            prop::array::uniform3(-50.0f64..50.0),
        )
            .prop_filter_map("degenerate quaternion", |(q, t)| {
                Pose::from_wxyz(0.0, q, Vec3::from(t)).ok()
            })
    }

    #[test]
    fn look_at_axes() {
        let eye = Vec3::new(1.0, 2.0, 3.0);
        let pose = Pose::look_at(eye, eye + Vec3::x(), Vec3::z()).unwrap();
        assert!((pose.transform_vector(&Vec3::z()) - Vec3::x()).norm() < 1e-12);
        assert!((pose.transform_vector(&Vec3::y()) + Vec3::z()).norm() < 1e-12);
        assert!((pose.transform_vector(&Vec3::x()) + Vec3::y()).norm() < 1e-12);
        assert!(Pose::look_at(eye, eye + Vec3::z(), Vec3::z()).is_err());
        assert!(Pose::look_at(eye, eye, Vec3::z()).is_err());
    }

    #[test]
    fn optical_mount_axes() {
        let forward = Pose::optical_mount(0.0, Vec3::zeros());
        assert!((forward.transform_vector(&Vec3::z()) - Vec3::x()).norm() < 1e-12);
        assert!((forward.transform_vector(&Vec3::x()) + Vec3::y()).norm() < 1e-12);
        assert!((forward.transform_vector(&Vec3::y()) + Vec3::z()).norm() < 1e-12);
        let left = Pose::optical_mount(FRAC_PI_2, Vec3::zeros());
        assert!((left.transform_vector(&Vec3::z()) - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn identity_transform() {
        let p = Pose::identity().transform_point(&Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(p, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn quarter_yaw() {
        let pose = Pose::from_yaw(0.0, FRAC_PI_2, Vec3::zeros());
        let p = pose.transform_point(&Vec3::new(1.0, 0.0, 0.0));
        assert!((p - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wxyz_storage_order() {
        let pose = Pose::from_wxyz(0.0, [0.0, 0.0, 0.0, 1.0], Vec3::zeros()).unwrap();
        // 180 degrees about z.
        let p = pose.transform_point(&Vec3::new(1.0, 0.0, 0.0));
        assert!((p - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(pose.wxyz(), [0.0, 0.0, 0.0, 1.0]);
        assert!(Pose::from_wxyz(0.0, [0.0; 4], Vec3::zeros()).is_err());
    }

    #[test]
    fn project_examples() {
        let k = intr();
        let px = k.project(&Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((px.u, px.v, px.depth), (424.0, 240.0, 2.0));
        let px = k.project(&Vec3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!((px.u, px.v, px.depth), (624.0, 240.0, 2.0));
        assert!(k.project(&Vec3::new(0.0, 0.0, -1.0)).is_none());
        assert!(k.project(&Vec3::new(0.0, 0.0, 0.0)).is_none());
        // Far off to the side.
        assert!(k.project(&Vec3::new(10.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn project_bounds_use_pixel_centres() {
        let k = intr();
        // u = -0.4 rounds to pixel 0; u = -0.6 rounds to -1.
        let z = 1.0;
        let x_in = (-0.4 - k.cx) / k.fx;
        let x_out = (-0.6 - k.cx) / k.fx;
        assert!(k.project(&Vec3::new(x_in, 0.0, z)).is_some());
        assert!(k.project(&Vec3::new(x_out, 0.0, z)).is_none());
        let x_edge = (847.4 - k.cx) / k.fx;
        assert_eq!(k.project(&Vec3::new(x_edge, 0.0, z)).unwrap().rounded().0, 847);
    }

    #[test]
    fn backproject_examples() {
        let k = intr();
        assert_eq!(k.backproject(424.0, 240.0, 5.0).unwrap(), Vec3::new(0.0, 0.0, 5.0));
        assert_eq!(k.backproject(624.0, 240.0, 2.0).unwrap(), Vec3::new(1.0, 0.0, 2.0));
        assert!(matches!(
            k.backproject(1.0, 1.0, 0.0),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(k.backproject(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 2.0, 0.0, 4, 4).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let traj = vec![
            Pose::from_yaw(0.0, 0.0, Vec3::zeros()),
            Pose::from_yaw(1.0, FRAC_PI_2, Vec3::new(2.0, 0.0, 0.0)),
            Pose::from_yaw(3.0, 0.3, Vec3::new(2.0, 5.0, 0.0)),
        ];
        assert_eq!(interpolate_pose(&traj, 1.0).unwrap(), traj[1]);
        assert_eq!(interpolate_pose(&traj, 0.0).unwrap(), traj[0]);
        let mid = interpolate_pose(&traj, 0.5).unwrap();
        assert!((mid.translation - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2 / 2.0);
        assert!(mid.rotation.angle_to(&expected) < 1e-9);
        assert_eq!(mid.timestamp, 0.5);
        let err = interpolate_pose(&traj, 3.5).unwrap_err();
        assert!(err.to_string().contains("out of range"));
        assert!(interpolate_pose(&traj, -0.1).is_err());
        assert!(interpolate_pose(&[], 0.0).is_err());
    }

    #[test]
    fn interpolation_takes_short_arc() {
        let a = Pose::from_yaw(0.0, 0.1, Vec3::zeros());
        let mut b = Pose::from_yaw(1.0, 0.3, Vec3::zeros());
        b.rotation = UnitQuaternion::new_unchecked(-b.rotation.into_inner());
        let mid = interpolate_pose(&[a, b], 0.5).unwrap();
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.2);
        assert!(mid.rotation.angle_to(&expected) < 1e-9);
    }

    #[test]
    fn depth_image_validation() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let mut img = DepthImage::empty(k, Pose::identity());
        img.depth.set(1, 1, Some(2.0));
        assert!(img.validate().is_ok());
        let mut sigma = Grid::filled(4, 4, None);
        sigma.set(1, 1, Some(0.1));
        img.sigma = Some(sigma.clone());
        assert!(img.validate().is_ok());
        sigma.set(0, 0, Some(0.1));
        img.sigma = Some(sigma);
        assert!(img.validate().is_err());
        img.sigma = None;
        img.depth.set(2, 2, Some(-1.0));
        assert!(img.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn pose_round_trip(pose in arb_pose(), p in prop::array::uniform3(-100.0f64..100.0)) {
            let p = Vec3::from(p);
            let back = pose.inverse().transform_point(&pose.transform_point(&p));
            prop_assert!((back - p).norm() < 1e-9);
            let id = pose.inverse().compose(&pose);
            prop_assert!(id.translation.norm() < 1e-9);
            prop_assert!(id.rotation.angle() < 1e-9);
            prop_assert!((pose.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn compose_matches_matrix_product(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let ab = a.compose(&b);
            let diff = ab.to_matrix() - a.to_matrix() * b.to_matrix();
            prop_assert!(diff.abs().max() < 1e-9);
            let left = a.compose(&b).compose(&c).to_matrix();
            let right = a.compose(&b.compose(&c)).to_matrix();
            prop_assert!((left - right).abs().max() < 1e-9);
        }

        #[test]
        fn project_backproject_round_trip(u in 0.0f64..847.0, v in 0.0f64..479.0, d in 0.1f64..200.0) {
            let k = intr();
            let p = k.backproject(u, v, d).unwrap();
            let px = k.project(&p).unwrap();
            prop_assert!((px.u - u).abs() < 1e-6);
            prop_assert!((px.v - v).abs() < 1e-6);
            prop_assert!((px.depth - d).abs() < 1e-6);
        }
    }
}
