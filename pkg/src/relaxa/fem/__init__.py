"""Meshes, P1 assembly and discrete norms."""
from relaxa.fem.assembly import assemble, boundary_mass_matrix, mass_matrix, stiffness_matrix
from relaxa.fem.mesh import MeshError, build_mesh, domain_measure, element_volumes
from relaxa.fem.norms import NormSuite, norm_h1
