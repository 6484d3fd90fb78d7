//! Skeleton pose images: scene construction, analytic rasterization,
//! depth colormaps and multi-view tiling.

mod colormap;
mod raster;
mod scene;
mod tile;

pub use colormap::{decode_depth_colormap, decode_depth_values, depth_index, encode_depth_colormap, lut, lut_entry, nearest_index, ColormapError};
pub use raster::{rasterize, render_skeleton, RenderOutput};
pub use scene::{
    build_skeleton_scene, ArmSkeleton, Primitive, Rgb, SkeletonJoint, SkeletonScene, StripePattern, StyleConfig,
};
pub use tile::{tile_views, untile_views, TileError};
