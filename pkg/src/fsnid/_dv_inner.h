/* Elementwise pieces of the DV training steps.
 * restrict + -fno-trapping-math let the compiler turn the selects into
 * vector blends instead of unpredictable branches. */
#ifndef FSNID_DV_INNER_H
#define FSNID_DV_INNER_H

#include <math.h>

static inline void fsnid_relu(double *restrict h, long n)
{
    for (long k = 0; k < n; k++) {
        double v = h[k];
        h[k] = v > 0.0 ? v : 0.0;
    }
}

/* ga[k] = coef * w2[k] where the unit was active, else 0 */
static inline void fsnid_relu_grad(const double *restrict a, double *restrict ga,
                                   const double *restrict w2, double coef, long n)
{
    for (long k = 0; k < n; k++) {
        double v = coef * w2[k];
        ga[k] = a[k] > 0.0 ? v : 0.0;
    }
}

static inline void fsnid_adam(double *restrict p, const double *restrict g,
                              double *restrict m, double *restrict v, long n,
                              double lr, double beta1, double beta2, double eps,
                              double c1, double c2)
{
    /* bias corrections hoisted out: one sqrt and one division per element */
    double step = lr / c1, inv_sc2 = 1.0 / sqrt(c2);
    for (long k = 0; k < n; k++) {
        double gk = g[k];
        double mk = beta1 * m[k] + (1.0 - beta1) * gk;
        double vk = beta2 * v[k] + (1.0 - beta2) * gk * gk;
        m[k] = mk;
        v[k] = vk;
        p[k] -= step * mk / (sqrt(vk) * inv_sc2 + eps);
    }
}

/* Gate rows are laid out [i | f | o | g], each H wide.  The sigmoid blocks are
 * evaluated as 0.5 * (1 + tanh(z / 2)) so one vectorised tanh call covers all
 * four blocks: prescale halves the sigmoid pre-activations, the caller applies
 * tanh in place, then lstm_gates finishes the sigmoids and the cell update. */
static inline void fsnid_lstm_prescale(double *restrict z, long B, long H)
{
    for (long r = 0; r < B; r++) {
        double *restrict zr = z + r * 4 * H;
        for (long k = 0; k < 3 * H; k++)
            zr[k] *= 0.5;
    }
}

static inline void fsnid_lstm_gates(double *restrict z, const double *restrict c_prev,
                                    double *restrict c, long B, long H)
{
    for (long r = 0; r < B; r++) {
        double *restrict zr = z + r * 4 * H;
        const double *restrict cp = c_prev + r * H;
        double *restrict cr = c + r * H;
        for (long k = 0; k < 3 * H; k++)
            zr[k] = 0.5 * (1.0 + zr[k]);
        for (long k = 0; k < H; k++)
            cr[k] = zr[H + k] * cp[k] + zr[k] * zr[3 * H + k];
    }
}

static inline void fsnid_lstm_hidden(const double *restrict z, const double *restrict tc,
                                     double *restrict h, long B, long H)
{
    for (long r = 0; r < B; r++) {
        const double *restrict o = z + r * 4 * H + 2 * H;
        for (long k = 0; k < H; k++)
            h[r * H + k] = o[k] * tc[r * H + k];
    }
}

/* One step of backpropagation through the cell.  dc carries the cell
 * gradient in and out (multiplied by the forget gate on the way out). */
static inline void fsnid_lstm_cell_grad(const double *restrict z, const double *restrict tc,
                                        const double *restrict c_prev,
                                        const double *restrict dh, double *restrict dc,
                                        double *restrict dz, long B, long H)
{
    for (long r = 0; r < B; r++) {
        const double *restrict zr = z + r * 4 * H;
        double *restrict dzr = dz + r * 4 * H;
        const double *restrict tcr = tc + r * H;
        const double *restrict cpr = c_prev + r * H;
        const double *restrict dhr = dh + r * H;
        double *restrict dcr = dc + r * H;
        for (long k = 0; k < H; k++) {
            double i = zr[k], f = zr[H + k], o = zr[2 * H + k], g = zr[3 * H + k];
            double t = tcr[k], d_h = dhr[k];
            double d_c = dcr[k] + d_h * o * (1.0 - t * t);
            dzr[k] = d_c * g * i * (1.0 - i);
            dzr[H + k] = d_c * cpr[k] * f * (1.0 - f);
            dzr[2 * H + k] = d_h * t * o * (1.0 - o);
            dzr[3 * H + k] = d_c * i * (1.0 - g * g);
            dcr[k] = d_c * f;
        }
    }
}

#endif
