"""Dense brute-force references, written without the package's assembly machinery."""
import numpy as np


def duffy_rule(n=8):
    """Tensor Gauss rule on the reference triangle via the collapsed map; exact to degree 2n-2."""
    a, wa = np.polynomial.legendre.leggauss(n)
    a, wa = (a + 1) / 2, wa / 2
    U, V = np.meshgrid(a, a, indexing="ij")
    WU, WV = np.meshgrid(wa, wa, indexing="ij")
    x = U * (1 - V)
    y = V
    w = WU * WV * (1 - V)
    return np.column_stack([x.ravel(), y.ravel()]), w.ravel()  # weights sum to 1/2


def cell_map(p):
    """Affine map of the reference triangle onto the cell with corners p (3, 2)."""
    J = np.column_stack([p[1] - p[0], p[2] - p[0]])
    return J, abs(np.linalg.det(J))


def p1_basis(p, x):
    """Values (npts, 3) and constant gradients (3, 2) of the hat functions of cell p at points x."""
    A = np.column_stack([np.ones(3), p])  # rows [1, x_i, y_i]
    coef = np.linalg.inv(A)  # column a: coefficients of hat a
    vals = np.column_stack([np.ones(len(x)), x]) @ coef
    return vals, coef[1:, :].T


def cell_points(p, n=8):
    ref, w = duffy_rule(n)
    J, det = cell_map(p)
    return p[0] + ref @ J.T, w * det


def voigt_strain_rows(grads):
    """(3, 6) map from the cell's nodal displacements to engineering Voigt strain."""
    B = np.zeros((3, 6))
    for a in range(3):
        gx, gy = grads[a]
        B[:, 2 * a] = (gx, 0.0, gy)
        B[:, 2 * a + 1] = (0.0, gy, gx)
    return B


def dense_mass(mesh, weight=lambda x, y: np.ones_like(x)):
    n = mesh.n_vertices
    M = np.zeros((n, n))
    for cell in mesh.cells:
        p = mesh.vertices[cell]
        x, w = cell_points(p)
        phi, _ = p1_basis(p, x)
        c = weight(x[:, 0], x[:, 1])
        M[np.ix_(cell, cell)] += (phi * (w * c)[:, None]).T @ phi
    return M


def dense_stiffness(mesh, coef=lambda x, y: np.ones_like(x)):
    n = mesh.n_vertices
    K = np.zeros((n, n))
    for cell in mesh.cells:
        p = mesh.vertices[cell]
        x, w = cell_points(p)
        _, g = p1_basis(p, x)
        K[np.ix_(cell, cell)] += (w @ coef(x[:, 0], x[:, 1])) * g @ g.T
    return K


def dense_elasticity(mesh, Cfun):
    """All-vertex dofs [ux0, uy0, ...]; Cfun(x, y) -> (npts, 3, 3)."""
    n = 2 * mesh.n_vertices
    K = np.zeros((n, n))
    for cell in mesh.cells:
        p = mesh.vertices[cell]
        x, w = cell_points(p)
        _, g = p1_basis(p, x)
        B = voigt_strain_rows(g)
        Cint = np.einsum("q,qij->ij", w, Cfun(x[:, 0], x[:, 1]))
        dofs = np.ravel(np.column_stack([2 * cell, 2 * cell + 1]))
        K[np.ix_(dofs, dofs)] += B.T @ Cint @ B
    return K


def dense_div_coupling(mesh, coef=lambda x, y: np.ones_like(x)):
    """(nv, 2 nv) all-vertex version of int coef * div(v_j) * psi_i."""
    nv = mesh.n_vertices
    D = np.zeros((nv, 2 * nv))
    for cell in mesh.cells:
        p = mesh.vertices[cell]
        x, w = cell_points(p)
        phi, g = p1_basis(p, x)
        B = voigt_strain_rows(g)
        div = B[0] + B[1]
        dofs = np.ravel(np.column_stack([2 * cell, 2 * cell + 1]))
        D[np.ix_(cell, dofs)] += np.outer(phi.T @ (w * coef(x[:, 0], x[:, 1])), div)
    return D


def dense_load(mesh, density):
    b = np.zeros(mesh.n_vertices)
    for cell in mesh.cells:
        p = mesh.vertices[cell]
        x, w = cell_points(p)
        phi, _ = p1_basis(p, x)
        b[cell] += phi.T @ (w * density(x[:, 0], x[:, 1]))
    return b


def dense_integral(mesh, density_of_cell):
    """Sum over cells of int density; density_of_cell(p, x, phi_vals) -> values at x."""
    total = 0.0
    for cell in mesh.cells:
        p = mesh.vertices[cell]
        x, w = cell_points(p)
        phi, g = p1_basis(p, x)
        total += w @ density_of_cell(cell, x, phi, g)
    return total


def interior_dofs(mesh):
    iv = mesh.interior_vertices
    return np.ravel(np.column_stack([2 * iv, 2 * iv + 1]))


def dense_p1_eval(mesh, field, x, y):
    """Evaluate a P1 field at arbitrary points by locating the containing cell."""
    pts = np.column_stack([np.ravel(x), np.ravel(y)])
    out = np.full(len(pts), np.nan)
    for cell in mesh.cells:
        vals, _ = p1_basis(mesh.vertices[cell], pts)
        inside = vals.min(axis=1) >= -1e-12
        out[inside] = vals[inside] @ field[cell]
    return out.reshape(np.shape(x))
