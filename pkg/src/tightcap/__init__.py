"""Body-under-clothing reconstruction from a single clothed 3D scan.

Pipeline: three-stage non-rigid alignment of a skinned template to the scan
(silhouette, point cloud, per-vertex), geometry-image encoding of the
aligned surface, tightness-field estimation or prediction, inner-body
recovery, garment segmentation, and retargeting.
"""

from .mesh import MeshError, TriMesh, subdivide_mesh, unique_edges, vertex_normals
from .meshio import MeshParseError, ensure_normals, load_mesh, save_mesh
from .metrics import MetricReport, hausdorff_metrics, sample_surface
from .spatial import SpatialIndex
from .template import (JointRig, SkinnedTemplate, TemplateError, load_template,
                       refine_garment_boundaries, save_template, skeletal_warp)
from .synthbody import (POSE_PRESETS, SynthFixture, SynthSpec,
                        generate_synthetic_template, make_clothed_fixture,
                        pose_rig)
from .solver import (GradientCheck, ResidualBlock, SolveOptions, SolveResult,
                     SolverError, check_gradient, solve)
from .deform import (EDGraph, EDState, arap_with_jacobian, build_ed_graph,
                     fps_sample, warp_points, warp_with_jacobian)
from .cameras import Camera, CameraRig, build_camera_rig
from .silhouette import SilhouetteObs, render_silhouette
from .registration import (AlignmentResult, RegistrationConfig,
                           RegistrationError, align_full, fit_rig,
                           load_joints, save_alignment, save_joints)
from .geomimage import (CHANNEL_ORDER, GeometryImage, GIError, GIFormatError,
                        inverse_gi, rasterize_gi, read_gi, write_gi)
from .tightness import (BaselinePredictConfig, BridgeError, PredictionOutput,
                        TightnessConfig, TightnessField,
                        angular_gaussian_weight, baseline_predict,
                        bidirectional_tightness, external_predict,
                        naive_tightness, one_to_many_tightness,
                        tightness_to_gi)
from .recovery import (GarmentLabels, RecoveryConfig, icm_minimize,
                       load_labels_ply, recover_direct, recover_shape,
                       recovery_energy, retarget, save_labels_ply,
                       segment_clothing, segmentation_energy,
                       smoothing_operator, tangent_frames)

__version__ = "0.1.0"
