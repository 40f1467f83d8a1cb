#pragma once

#include "rotostep/analysis.hpp"
#include "rotostep/assembly.hpp"
#include "rotostep/errors.hpp"
#include "rotostep/geometry.hpp"
#include "rotostep/io/config.hpp"
#include "rotostep/io/csv.hpp"
#include "rotostep/io/format.hpp"
#include "rotostep/io/msh.hpp"
#include "rotostep/io/vtk.hpp"
#include "rotostep/materials.hpp"
#include "rotostep/mesh.hpp"
#include "rotostep/parallel.hpp"
#include "rotostep/quadrature.hpp"
#include "rotostep/solver.hpp"
#include "rotostep/sparse.hpp"
#include "rotostep/vec.hpp"
