"""Domain models for the Gaussian flats reconstruction toolkit."""
from .camera_model import Camera
from .config_model import MeshConfig, PlaneInitConfig, SynthConfig, TrainConfig
from .dataset_model import Dataset, View
from .framebuffer_model import FrameBuffer, FrameBufferGrad
from .gaussian_model import Gaussian2D, Gaussian3D, planar_to_world, world_to_plane
from .mesh_model import OccupancyGrid, PlanarMesh, SceneMesh
from .plane_model import Plane, plane_frame
from .scene_model import FreeformGaussians, PlanarGaussians, Scene, WorldGaussians

__all__ = [
    'Camera', 'Dataset', 'View', 'FrameBuffer', 'FrameBufferGrad',
    'Gaussian2D', 'Gaussian3D', 'planar_to_world', 'world_to_plane',
    'MeshConfig', 'PlaneInitConfig', 'SynthConfig', 'TrainConfig',
    'OccupancyGrid', 'PlanarMesh', 'SceneMesh', 'Plane', 'plane_frame',
    'FreeformGaussians', 'PlanarGaussians', 'Scene', 'WorldGaussians',
]
