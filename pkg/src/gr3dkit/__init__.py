"""gr3dkit: grounding text, camera-frame 3D box geometry, and detection
evaluation for grounded spatial-reasoning pipelines."""

from gr3dkit._kernels import BACKEND as KERNEL_BACKEND
from gr3dkit.geom2d import Box2D, JitterParams, clamp_to_image, iou2d, jitter
from gr3dkit.geom3d import (
    Box3D,
    RotationMatrix,
    canonicalize,
    corners,
    euler_to_rotation,
    iou3d,
    iou3d_matrix,
    rotation_to_euler,
)
from gr3dkit.camera import (
    CameraIntrinsics,
    DepthMap,
    Pose,
    backproject,
    normalize_intrinsics,
    project,
    sample_region_points,
    scaled_intrinsics,
    transform_to_reference,
)
from gr3dkit.ground_text import StreamParser, parse, serialize
from gr3dkit.region_protocol import ProtocolState, build_training_sequence
from gr3dkit.evaluation import (
    evaluate_2d,
    evaluate_3d,
    evaluate_gcot,
    match_greedy,
    average_precision,
)

__version__ = "0.1.0"
