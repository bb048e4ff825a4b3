# Virtual element method for the 3D Poisson problem on polyhedral meshes

__version__ = "1.0.0"
