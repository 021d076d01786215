#ifndef MESHGROW_H
#define MESHGROW_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum {
  MG_STATUS_OK = 0,
  MG_STATUS_NULL_POINTER = 1,
  MG_STATUS_INVALID_ARGUMENT = 2,
  MG_STATUS_IO = 3,
  MG_STATUS_MESH = 4,
  MG_STATUS_FEATURE = 5,
  MG_STATUS_MODEL = 6,
  MG_STATUS_BUFFER_TOO_SMALL = 7,
  MG_STATUS_PANIC = 99,
} MgStatus;

/**
 * Triangle mesh handle.
 */
typedef struct MgMesh MgMesh;

/**
 * Trained model handle: network plus the feature options and normalization
 * it was trained with.
 */
typedef struct MgModel MgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next `mg_*` call on the same thread.
 */
const char *mg_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *mg_version(void);

/**
 * Loads an OBJ or OFF file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
MgStatus mg_mesh_load(const char *path, MgMesh **out);

/**
 * Builds a mesh from `n_vertices` xyz triples and `n_faces` index triples.
 *
 * # Safety
 * `vertices` must hold `3 * n_vertices` doubles, `faces` `3 * n_faces`
 * indices, and `out` must be writable.
 */
MgStatus mg_mesh_new(const double *vertices,
                     size_t n_vertices,
                     const uint32_t *faces,
                     size_t n_faces,
                     MgMesh **out);

/**
 * # Safety
 * `mesh` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void mg_mesh_free(MgMesh *mesh);

/**
 * Vertex, face and edge counts; any output pointer may be null.
 *
 * # Safety
 * `mesh` must be a live handle; non-null outputs must be writable.
 */
MgStatus mg_mesh_counts(const MgMesh *mesh, size_t *vertices, size_t *faces, size_t *edges);

/**
 * Writes the mesh; the format follows the extension (.obj or .off).
 *
 * # Safety
 * `mesh` must be a live handle and `path` a NUL-terminated string.
 */
MgStatus mg_mesh_save(const MgMesh *mesh, const char *path);

/**
 * Edge-collapse decimation of a closed manifold to at most
 * `target_edges` edges; the result is a new handle.
 *
 * # Safety
 * `mesh` must be a live handle and `out` writable.
 */
MgStatus mg_mesh_decimate(const MgMesh *mesh, size_t target_edges, MgMesh **out);

/**
 * Per-edge input features, row-major `channels x edges`.
 *
 * `*channels` and `*edges` always receive the shape. With `buffer` null
 * only the shape is reported; otherwise `capacity` must be at least
 * `channels * edges`.
 *
 * # Safety
 * `mesh` must be a live handle, `channels`/`edges` writable, and a
 * non-null `buffer` must hold `capacity` doubles.
 */
MgStatus mg_features(const MgMesh *mesh,
                     bool with_coords,
                     bool center_coords,
                     double *buffer,
                     size_t capacity,
                     size_t *channels,
                     size_t *edges);

/**
 * Loads a checkpoint written by `meshgrow train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
MgStatus mg_model_load(const char *path, MgModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void mg_model_free(MgModel *model);

/**
 * Edge count the model expects its input meshes to have.
 *
 * # Safety
 * `model` must be a live handle and `edges` writable.
 */
MgStatus mg_model_input_edges(const MgModel *model, size_t *edges);

/**
 * Probability that `mesh` belongs to the growing class. The mesh must
 * have exactly the model's input edge count (see `mg_model_input_edges`).
 *
 * # Safety
 * Both handles must be live and `probability` writable.
 */
MgStatus mg_model_predict(const MgModel *model, const MgMesh *mesh, double *probability);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MESHGROW_H */
