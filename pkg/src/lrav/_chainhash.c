/* Chained SHA3-256 over fixed-size blocks, back to front.
 *
 * Computes D_k = H(B_k); D_j = H(B_j || D_{j+1}); returns D_0, where
 * B_0..B_k partition the input into `block`-byte chunks (last may be short).
 * Semantically identical to the pure-Python loop in lrav.crtm; kept in C so
 * the per-block cost is dominated by the hash itself rather than by object
 * churn, which matters for the block-size scaling benchmarks.
 */

#define PY_SSIZE_T_CLEAN
#include <Python.h>
#include <openssl/evp.h>

static PyObject *
chained_sha3_256(PyObject *self, PyObject *args)
{
    Py_buffer data;
    Py_ssize_t block;

    if (!PyArg_ParseTuple(args, "y*n", &data, &block))
        return NULL;
    if (block <= 0) {
        PyBuffer_Release(&data);
        PyErr_SetString(PyExc_ValueError, "block size must be positive");
        return NULL;
    }
    if (data.len == 0) {
        PyBuffer_Release(&data);
        PyErr_SetString(PyExc_ValueError, "input must be non-empty");
        return NULL;
    }

    const unsigned char *buf = (const unsigned char *)data.buf;
    Py_ssize_t len = data.len;
    unsigned char digest[32];
    int ok = 1;

    Py_BEGIN_ALLOW_THREADS
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    if (ctx == NULL || EVP_DigestInit_ex(ctx, EVP_sha3_256(), NULL) != 1) {
        ok = 0;
    } else {
        Py_ssize_t nblocks = (len + block - 1) / block;
        int have_chain = 0;
        for (Py_ssize_t i = nblocks; i-- > 0;) {
            Py_ssize_t start = i * block;
            Py_ssize_t blen = (start + block <= len) ? block : len - start;
            /* md=NULL re-initialises the already-fetched digest cheaply */
            if (EVP_DigestInit_ex(ctx, NULL, NULL) != 1 ||
                EVP_DigestUpdate(ctx, buf + start, (size_t)blen) != 1 ||
                (have_chain && EVP_DigestUpdate(ctx, digest, 32) != 1) ||
                EVP_DigestFinal_ex(ctx, digest, NULL) != 1) {
                ok = 0;
                break;
            }
            have_chain = 1;
        }
    }
    EVP_MD_CTX_free(ctx);
    Py_END_ALLOW_THREADS

    PyBuffer_Release(&data);
    if (!ok) {
        PyErr_SetString(PyExc_RuntimeError, "sha3-256 digest failure");
        return NULL;
    }
    return PyBytes_FromStringAndSize((const char *)digest, 32);
}

static PyMethodDef methods[] = {
    {"chained_sha3_256", chained_sha3_256, METH_VARARGS,
     "chained_sha3_256(data, block) -> 32-byte chained digest"},
    {NULL, NULL, 0, NULL},
};

static struct PyModuleDef module = {
    PyModuleDef_HEAD_INIT, "_chainhash", NULL, -1, methods,
};

PyMODINIT_FUNC
PyInit__chainhash(void)
{
    return PyModule_Create(&module);
}
