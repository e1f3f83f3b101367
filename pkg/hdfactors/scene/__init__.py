from hdfactors.scene.api import Scene
from hdfactors.scene.core import RenderConfig
