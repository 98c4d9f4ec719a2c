import pytest

from stochtunnel import plotting

TABLES = {
    "coefficients.csv": "k[1/L],E[E],ReR[1],ImR[1],ReT[1],ImT[1],unitarity_defect[1]\n"
                        "0.9,0.405,0.9,0.1,0.01,0.0,0.0\n1.1,0.605,0.8,0.2,0.02,0.01,0.0\n",
    "density.csv": "t[T],x[L],psi2[1/L],walkers_p[1/L]\n1.0,0.0,0.1,0.12\n1.0,1.0,0.2,0.19\n"
                   "2.0,0.0,0.3,0.28\n2.0,1.0,0.1,0.1\n",
    "paths.csv": "path_id,t[T],x[L],label\n0,0.0,-1.0,0\n0,0.1,0.5,1\n1,0.0,-2.0,0\n1,0.1,-1.8,0\n",
    "times.csv": "series,path_id,tau_p[T],tau_int[T],tau_h[T],first_passage[T],flags\n"
                 "t_1,0,1.0,1.2,0.2,1.3,ok\nt_1,1,1.5,1.5,0.0,1.5,ok\nt_1,2,1.2,1.3,0.1,1.3,ok\n"
                 "t_2,0,nan,nan,nan,nan,no_crossing\n",
    "sweep.csv": "series,param[1],mean[T],stderr[T],n_effective,n_flagged,reference[T]\n"
                 "tau_p,0.0,1.25,0.01,100,0,1.5\ntau_p,1.0,1.12,0.01,100,0,1.33\n",
    "fp_density.csv": "t[T],x[L],fp[1/L],psi2[1/L],mc[1/L]\n"
                      "5.0,0.0,0.1,0.1,0.11\n5.0,1.0,0.2,0.2,0.2\n",
}


@pytest.mark.parametrize("mode", sorted(plotting.PLOTTERS))
def test_render_is_reproducible(tmp_path, mode):
    for name, text in TABLES.items():
        (tmp_path / name).write_text(text)
    first = [p.read_bytes() for p in plotting.render(mode, tmp_path)]
    second = [p.read_bytes() for p in plotting.render(mode, tmp_path)]
    assert first == second
    assert all(b.lstrip().startswith(b"<?xml") for b in first)
