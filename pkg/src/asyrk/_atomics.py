"""Lock-free atomic read-modify-write on float64/int64 array elements.

Exposed as numba intrinsics so they can be called from ``nogil`` kernels.
"""

from llvmlite import ir
from numba import types
from numba.core import cgutils
from numba.extending import intrinsic


def _element_ptr(context, builder, arrty, arr, idx):
    ary = context.make_array(arrty)(context, builder, arr)
    return cgutils.get_item_pointer(context, builder, arrty, ary, [idx])


@intrinsic
def atomic_add_f64(typingctx, arr, idx, val):
    """``arr[idx] += val`` as a compare-and-swap loop on the 64-bit pattern.

    Returns the value seen immediately before the successful swap. The
    increment is applied exactly once regardless of contention.
    """
    if not (isinstance(arr, types.Array) and arr.dtype == types.float64):
        return None
    if not isinstance(idx, types.Integer):
        return None
    sig = types.float64(arr, types.intp, types.float64)

    def codegen(context, builder, signature, args):
        a, i, v = args
        ptr = _element_ptr(context, builder, signature.args[0], a, i)
        i64 = ir.IntType(64)
        iptr = builder.bitcast(ptr, i64.as_pointer())
        entry = builder.basic_block
        loop = builder.append_basic_block("cas.loop")
        done = builder.append_basic_block("cas.done")
        first = builder.load_atomic(iptr, "monotonic", 8)
        builder.branch(loop)

        builder.position_at_end(loop)
        expected = builder.phi(i64)
        expected.add_incoming(first, entry)
        old = builder.bitcast(expected, ir.DoubleType())
        new = builder.bitcast(builder.fadd(old, v), i64)
        pair = builder.cmpxchg(iptr, expected, new, "acq_rel", "monotonic")
        expected.add_incoming(builder.extract_value(pair, 0), builder.basic_block)
        builder.cbranch(builder.extract_value(pair, 1), done, loop)

        builder.position_at_end(done)
        return old

    return sig, codegen


@intrinsic
def atomic_add_i64(typingctx, arr, idx, val):
    """Atomic ``arr[idx] += val`` for int64 arrays; returns the previous value."""
    if not (isinstance(arr, types.Array) and arr.dtype == types.int64):
        return None
    sig = types.int64(arr, types.intp, types.int64)

    def codegen(context, builder, signature, args):
        a, i, v = args
        ptr = _element_ptr(context, builder, signature.args[0], a, i)
        return builder.atomic_rmw("add", ptr, v, "acq_rel")

    return sig, codegen

