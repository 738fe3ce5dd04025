"""Audio-driven 3D face animation on resampled multi-resolution meshes."""
from importlib import resources

from .errors import TalkMeshError
from .mesh import Mesh, load_obj, save_obj

__version__ = "0.1.0"


def bundled_mesh_path(name="hemisphere_cap.obj"):
    """Filesystem path of a mesh shipped with the package."""
    return str(resources.files(__package__) / "data" / name)


__all__ = ["TalkMeshError", "Mesh", "load_obj", "save_obj", "bundled_mesh_path", "__version__"]
